#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedfusion/alignment.hpp"
#include "fedfusion/tensor.hpp"
#include "fedfusion/types.hpp"

namespace fedfusion::aug {

// Speaker characteristics: the factor replaced by recombination.
struct SpeakerFactors {
  std::vector<double> s;
  std::string speaker_id;
};

// Content characteristics: word vectors, rhythm (durations and inter-word
// gaps). These travel with the label under recombination.
struct ContentFactors {
  Tensor2 word_vectors;            // n_words x d_c
  std::vector<double> durations;   // n_words
  std::vector<double> gaps;        // n_words - 1
  std::vector<std::string> texts;  // n_words
};

// A labeled recording. Feature streams are word/token level; the factor
// fields are present when the corpus is factorized (synthetic corpora) and
// enable the in-repo converter.
struct Sample {
  std::string speaker_id;
  Label label = Label::cn;
  std::vector<align::TimedWord> words;
  std::vector<align::Token> tokens;  // words + pause markers
  Tensor2 audio_words;               // n_words x d
  Tensor2 token_text;                // n_tokens x d
  std::optional<SpeakerFactors> speaker;
  std::optional<ContentFactors> content;
};

// Produces the feature streams of a sample with the given speaker, content
// and label. noise_seed drives any stochastic part of the conversion.
struct VoiceConverter {
  virtual ~VoiceConverter() = default;
  virtual Sample synthesize(const SpeakerFactors& speaker, const ContentFactors& content,
                            Label label, std::uint64_t noise_seed) const = 0;
};

// Cross-category recombination: speaker from target, content and label from
// source. Labels must differ ("category constraint violated"); both samples
// must carry factors.
Sample recombine(const Sample& source, const Sample& target, const VoiceConverter& converter,
                 std::uint64_t noise_seed);

// Every sample acts once as target; the source is drawn uniformly (seeded,
// with replacement) from the opposite class. Originals are retained and the
// augmented samples appended in target order. Throws on single-class input.
std::vector<Sample> augment_dataset(const std::vector<Sample>& train,
                                    const VoiceConverter& converter, std::uint64_t seed);

struct SynthCorpusConfig {
  int n_per_class = 60;
  int d_s = 8;   // speaker dim
  int d_c = 8;   // content dim
  int d = 16;    // feature dim of both streams
  double pathology_strength = 1.0;
  double pause_shift = 0.4;  // extra mean inter-word gap for AD
  double noise_std = 0.1;
  std::uint64_t seed = 1;
  int min_words = 6;
  int max_words = 12;
  double word_duration = 0.3;
  double gap_mean = 0.25;
  double gap_std = 0.15;
  double frame_hz = 25.0;  // frame rate of exported frame-level features
  align::PauseThresholds thresholds{};

  void validate() const;
};

// Generative corpus with explicit speaker/content factorization:
//   A_t = U s + V c_t + [label=AD] * pathology_strength * p + noise
//   T_t = W c_t
// AD gaps are mean-shifted by pause_shift. U, V, W, p and the pause-marker
// text rows are fixed per seed and published in the corpus manifest.
class SynthGenerator : public VoiceConverter {
 public:
  explicit SynthGenerator(const SynthCorpusConfig& cfg);

  std::vector<Sample> generate() const;

  Sample synthesize(const SpeakerFactors& speaker, const ContentFactors& content, Label label,
                    std::uint64_t noise_seed) const override;

  const SynthCorpusConfig& config() const { return cfg_; }
  const Tensor2& mixing_u() const { return u_; }
  const Tensor2& mixing_v() const { return v_; }
  const Tensor2& mixing_w() const { return w_; }
  const std::vector<double>& pathology_direction() const { return p_; }
  const std::vector<double>& marker_row(align::TokenKind kind) const;

 private:
  SynthCorpusConfig cfg_;
  Tensor2 u_, v_, w_;
  std::vector<double> p_;
  std::array<std::vector<double>, 3> marker_rows_;  // comma, period, ellipsis
};

// On-disk corpus: manifest JSON plus per-sample transcript, frame-level
// audio features, token-level text embeddings and (when factorized) the
// speaker/content factor files, all in the shared FPV matrix format.
struct Corpus {
  std::vector<Sample> samples;
  std::optional<SynthCorpusConfig> synth;  // present when factorized
};

void save_corpus(const std::filesystem::path& dir, const SynthCorpusConfig& cfg,
                 const std::vector<Sample>& samples);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace fedfusion::aug
