#include "fedfusion/augmentation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fedfusion/param_vector.hpp"
#include "fedfusion/profile.hpp"
#include "fedfusion/rng.hpp"

namespace fedfusion::aug {

namespace {

// stream tags for seeds derived from the corpus seed
constexpr std::uint64_t kMixU = 0xA1;
constexpr std::uint64_t kMixV = 0xA2;
constexpr std::uint64_t kMixW = 0xA3;
constexpr std::uint64_t kPathology = 0xA4;
constexpr std::uint64_t kMarkers = 0xA5;
constexpr std::uint64_t kSample = 0xA6;

std::string sample_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%04d", index);
  return buf;
}

Tensor2 draw_matrix(Rng& rng, int rows, int cols, double scale) {
  Tensor2 m(rows, cols);
  for (double& x : m.data) x = rng.normal() * scale;
  return m;
}

}  // namespace

void SynthCorpusConfig::validate() const {
  if (n_per_class < 1) throw std::invalid_argument("SynthCorpusConfig: n_per_class must be >= 1");
  if (d_s < 1 || d_c < 1 || d < 1) throw std::invalid_argument("SynthCorpusConfig: dims must be >= 1");
  if (noise_std < 0.0) throw std::invalid_argument("SynthCorpusConfig: noise_std must be >= 0");
  if (min_words < 1 || max_words < min_words) {
    throw std::invalid_argument("SynthCorpusConfig: bad word count range");
  }
  if (word_duration <= 0.0) throw std::invalid_argument("SynthCorpusConfig: word_duration <= 0");
  if (gap_std < 0.0) throw std::invalid_argument("SynthCorpusConfig: gap_std must be >= 0");
  if (frame_hz <= 0.0) throw std::invalid_argument("SynthCorpusConfig: frame_hz <= 0");
}

SynthGenerator::SynthGenerator(const SynthCorpusConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng_u(mix_seed({cfg.seed, kMixU}));
  u_ = draw_matrix(rng_u, cfg.d, cfg.d_s, 1.0 / std::sqrt(static_cast<double>(cfg.d_s)));
  Rng rng_v(mix_seed({cfg.seed, kMixV}));
  v_ = draw_matrix(rng_v, cfg.d, cfg.d_c, 1.0 / std::sqrt(static_cast<double>(cfg.d_c)));
  Rng rng_w(mix_seed({cfg.seed, kMixW}));
  w_ = draw_matrix(rng_w, cfg.d, cfg.d_c, 1.0 / std::sqrt(static_cast<double>(cfg.d_c)));
  Rng rng_p(mix_seed({cfg.seed, kPathology}));
  p_.resize(static_cast<std::size_t>(cfg.d));
  double norm = 0.0;
  for (double& x : p_) {
    x = rng_p.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : p_) x /= norm;
  Rng rng_m(mix_seed({cfg.seed, kMarkers}));
  for (auto& row : marker_rows_) {
    row.resize(static_cast<std::size_t>(cfg.d));
    for (double& x : row) x = rng_m.normal();
  }
}

const std::vector<double>& SynthGenerator::marker_row(align::TokenKind kind) const {
  switch (kind) {
    case align::TokenKind::comma: return marker_rows_[0];
    case align::TokenKind::period: return marker_rows_[1];
    case align::TokenKind::ellipsis: return marker_rows_[2];
    default: throw std::invalid_argument("marker_row: not a pause marker");
  }
}

Sample SynthGenerator::synthesize(const SpeakerFactors& speaker, const ContentFactors& content,
                                  Label label, std::uint64_t noise_seed) const {
  int n_words = content.word_vectors.rows;
  if (n_words < 1) throw std::invalid_argument("synthesize: empty sequence");
  if (static_cast<int>(speaker.s.size()) != cfg_.d_s) {
    throw std::invalid_argument("synthesize: speaker dimension mismatch");
  }
  if (content.word_vectors.cols != cfg_.d_c ||
      content.durations.size() != static_cast<std::size_t>(n_words) ||
      content.gaps.size() != static_cast<std::size_t>(n_words - 1) ||
      content.texts.size() != static_cast<std::size_t>(n_words)) {
    throw std::invalid_argument("synthesize: content factors inconsistent");
  }

  Sample out;
  out.speaker_id = speaker.speaker_id;
  out.label = label;
  out.speaker = speaker;
  out.content = content;

  double t = 0.0;
  out.words.resize(static_cast<std::size_t>(n_words));
  for (int i = 0; i < n_words; ++i) {
    auto& w = out.words[static_cast<std::size_t>(i)];
    w.text = content.texts[static_cast<std::size_t>(i)];
    w.start = t;
    w.end = t + content.durations[static_cast<std::size_t>(i)];
    t = w.end;
    if (i + 1 < n_words) t += content.gaps[static_cast<std::size_t>(i)];
  }
  out.tokens = align::insert_pause_tokens(out.words, cfg_.thresholds);

  // speaker baseline shared across words
  std::vector<double> base(static_cast<std::size_t>(cfg_.d), 0.0);
  for (int r = 0; r < cfg_.d; ++r) {
    double s = 0.0;
    for (int c = 0; c < cfg_.d_s; ++c) s += u_.at(r, c) * speaker.s[static_cast<std::size_t>(c)];
    base[static_cast<std::size_t>(r)] = s;
  }

  Rng noise(noise_seed);
  out.audio_words = Tensor2(n_words, cfg_.d);
  for (int i = 0; i < n_words; ++i) {
    for (int r = 0; r < cfg_.d; ++r) {
      double s = base[static_cast<std::size_t>(r)];
      for (int c = 0; c < cfg_.d_c; ++c) s += v_.at(r, c) * content.word_vectors.at(i, c);
      if (label == Label::ad) s += cfg_.pathology_strength * p_[static_cast<std::size_t>(r)];
      if (cfg_.noise_std > 0.0) s += cfg_.noise_std * noise.normal();
      out.audio_words.at(i, r) = s;
    }
  }

  out.token_text = Tensor2(static_cast<int>(out.tokens.size()), cfg_.d);
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    const align::Token& tok = out.tokens[i];
    if (tok.kind == align::TokenKind::word) {
      for (int r = 0; r < cfg_.d; ++r) {
        double s = 0.0;
        for (int c = 0; c < cfg_.d_c; ++c) {
          s += w_.at(r, c) * content.word_vectors.at(tok.word_index, c);
        }
        out.token_text.at(static_cast<int>(i), r) = s;
      }
    } else {
      const std::vector<double>& row = marker_row(tok.kind);
      for (int r = 0; r < cfg_.d; ++r) {
        out.token_text.at(static_cast<int>(i), r) = row[static_cast<std::size_t>(r)];
      }
    }
  }
  quantize(out.audio_words.data);
  quantize(out.token_text.data);
  return out;
}

std::vector<Sample> SynthGenerator::generate() const {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(2 * cfg_.n_per_class));
  for (int i = 0; i < 2 * cfg_.n_per_class; ++i) {
    Label label = i % 2 == 0 ? Label::ad : Label::cn;
    // one stream per sample index so generation order never matters; the
    // index is folded in with mix_seed because xor would let nearby corpus
    // seeds reproduce each other's samples under a permuted order
    Rng rng(mix_seed({cfg_.seed, kSample, static_cast<std::uint64_t>(i)}));
    int n_words =
        cfg_.min_words + static_cast<int>(rng.uniform_int(
                             static_cast<std::uint64_t>(cfg_.max_words - cfg_.min_words + 1)));
    SpeakerFactors speaker;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "spk-%04d", i);
    speaker.speaker_id = buf;
    speaker.s.resize(static_cast<std::size_t>(cfg_.d_s));
    for (double& x : speaker.s) x = rng.normal();

    ContentFactors content;
    content.word_vectors = Tensor2(n_words, cfg_.d_c);
    for (double& x : content.word_vectors.data) x = rng.normal();
    content.durations.assign(static_cast<std::size_t>(n_words), cfg_.word_duration);
    content.gaps.resize(static_cast<std::size_t>(n_words - 1));
    double gap_mean = cfg_.gap_mean + (label == Label::ad ? cfg_.pause_shift : 0.0);
    for (double& g : content.gaps) g = std::max(0.0, rng.normal(gap_mean, cfg_.gap_std));
    content.texts.resize(static_cast<std::size_t>(n_words));
    for (int w = 0; w < n_words; ++w) {
      content.texts[static_cast<std::size_t>(w)] = "w" + std::to_string(w);
    }

    std::uint64_t noise_seed = rng.next_u64();
    out.push_back(synthesize(speaker, content, label, noise_seed));
  }
  return out;
}

Sample recombine(const Sample& source, const Sample& target, const VoiceConverter& converter,
                 std::uint64_t noise_seed) {
  if (source.label == target.label) {
    throw std::invalid_argument("recombine: category constraint violated");
  }
  if (!source.content.has_value() || !target.speaker.has_value()) {
    throw std::invalid_argument("recombine: samples are not factorized");
  }
  return converter.synthesize(*target.speaker, *source.content, source.label, noise_seed);
}

std::vector<Sample> augment_dataset(const std::vector<Sample>& train,
                                    const VoiceConverter& converter, std::uint64_t seed) {
  std::vector<std::size_t> ad_idx;
  std::vector<std::size_t> cn_idx;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (train[i].label == Label::ad ? ad_idx : cn_idx).push_back(i);
  }
  if (ad_idx.empty() || cn_idx.empty()) {
    throw std::invalid_argument("augment_dataset: single-class input");
  }
  std::vector<Sample> out = train;
  out.reserve(train.size() * 2);
  Rng rng(seed);
  for (std::size_t t = 0; t < train.size(); ++t) {
    const auto& pool = train[t].label == Label::ad ? cn_idx : ad_idx;
    std::size_t s = pool[rng.uniform_int(pool.size())];
    std::uint64_t noise_seed = rng.next_u64();
    out.push_back(recombine(train[s], train[t], converter, noise_seed));
  }
  return out;
}

void save_corpus(const std::filesystem::path& dir, const SynthCorpusConfig& cfg,
                 const std::vector<Sample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "samples");
  SynthGenerator gen(cfg);
  save_matrix(dir / "mixing_u.fpv", gen.mixing_u());
  save_matrix(dir / "mixing_v.fpv", gen.mixing_v());
  save_matrix(dir / "mixing_w.fpv", gen.mixing_w());
  Tensor2 path_row(1, cfg.d);
  path_row.data = gen.pathology_direction();
  save_matrix(dir / "pathology.fpv", path_row);

  nlohmann::json manifest;
  manifest["format"] = "fedfusion-corpus-v1";
  manifest["config"] = {
      {"n_per_class", cfg.n_per_class},
      {"d_s", cfg.d_s},
      {"d_c", cfg.d_c},
      {"d", cfg.d},
      {"pathology_strength", cfg.pathology_strength},
      {"pause_shift", cfg.pause_shift},
      {"noise_std", cfg.noise_std},
      {"seed", cfg.seed},
      {"min_words", cfg.min_words},
      {"max_words", cfg.max_words},
      {"word_duration", cfg.word_duration},
      {"gap_mean", cfg.gap_mean},
      {"gap_std", cfg.gap_std},
      {"frame_hz", cfg.frame_hz},
      {"thresholds",
       {{"comma", cfg.thresholds.comma},
        {"period", cfg.thresholds.period},
        {"ellipsis", cfg.thresholds.ellipsis}}},
  };
  manifest["mixing"] = {{"u", "mixing_u.fpv"},
                        {"v", "mixing_v.fpv"},
                        {"w", "mixing_w.fpv"},
                        {"pathology", "pathology.fpv"}};

  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    std::string stem = "samples/" + sample_stem(static_cast<int>(i));

    align::Transcript t{s.speaker_id, s.label, s.words};
    align::save_transcript(dir / (stem + ".transcript.json"), t);

    // frame-level audio: each word row repeated over its frame span so the
    // alignment module's pooling reconstructs the word rows
    int n_frames =
        static_cast<int>(std::ceil(s.words.back().end * cfg.frame_hz));
    Tensor2 frames(std::max(n_frames, 1), s.audio_words.cols);
    int prev_end = 0;
    for (std::size_t w = 0; w < s.words.size(); ++w) {
      int lo = static_cast<int>(std::floor(s.words[w].start * cfg.frame_hz));
      int hi = static_cast<int>(std::ceil(s.words[w].end * cfg.frame_hz));
      lo = std::max(lo, prev_end);
      for (int r = lo; r < hi && r < frames.rows; ++r) {
        for (int c = 0; c < frames.cols; ++c) {
          frames.at(r, c) = s.audio_words.at(static_cast<int>(w), c);
        }
      }
      prev_end = std::max(prev_end, hi);
    }
    save_matrix(dir / (stem + ".audio.fpv"), frames, cfg.frame_hz);
    save_matrix(dir / (stem + ".text.fpv"), s.token_text);

    nlohmann::json entry{{"id", sample_stem(static_cast<int>(i))},
                         {"speaker_id", s.speaker_id},
                         {"label", to_string(s.label)},
                         {"transcript", stem + ".transcript.json"},
                         {"audio", stem + ".audio.fpv"},
                         {"text", stem + ".text.fpv"}};
    if (s.speaker.has_value()) {
      Tensor2 sp(1, static_cast<int>(s.speaker->s.size()));
      sp.data = s.speaker->s;
      save_matrix(dir / (stem + ".speaker.fpv"), sp);
      entry["speaker_factors"] = stem + ".speaker.fpv";
    }
    if (s.content.has_value()) {
      save_matrix(dir / (stem + ".content.fpv"), s.content->word_vectors);
      entry["content_factors"] = stem + ".content.fpv";
    }
    index.push_back(entry);
  }
  manifest["samples"] = index;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("save_corpus: cannot write manifest");
  out << manifest.dump(2) << "\n";
}

Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("load_corpus: missing manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(in);

  Corpus corpus;
  align::PauseThresholds thresholds;
  if (manifest.contains("config")) {
    const nlohmann::json& c = manifest["config"];
    SynthCorpusConfig cfg;
    cfg.n_per_class = c.at("n_per_class").get<int>();
    cfg.d_s = c.at("d_s").get<int>();
    cfg.d_c = c.at("d_c").get<int>();
    cfg.d = c.at("d").get<int>();
    cfg.pathology_strength = c.at("pathology_strength").get<double>();
    cfg.pause_shift = c.at("pause_shift").get<double>();
    cfg.noise_std = c.at("noise_std").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.min_words = c.at("min_words").get<int>();
    cfg.max_words = c.at("max_words").get<int>();
    cfg.word_duration = c.at("word_duration").get<double>();
    cfg.gap_mean = c.at("gap_mean").get<double>();
    cfg.gap_std = c.at("gap_std").get<double>();
    cfg.frame_hz = c.at("frame_hz").get<double>();
    cfg.thresholds.comma = c.at("thresholds").at("comma").get<double>();
    cfg.thresholds.period = c.at("thresholds").at("period").get<double>();
    cfg.thresholds.ellipsis = c.at("thresholds").at("ellipsis").get<double>();
    thresholds = cfg.thresholds;
    corpus.synth = cfg;
  }

  for (const auto& entry : manifest.at("samples")) {
    align::Transcript t = align::load_transcript(dir / entry.at("transcript").get<std::string>());
    Sample s;
    s.speaker_id = t.speaker_id;
    s.label = t.label;
    s.words = t.words;
    s.tokens = align::insert_pause_tokens(s.words, thresholds);

    double frame_hz = 0.0;
    Tensor2 frames = load_matrix(dir / entry.at("audio").get<std::string>(), &frame_hz);
    if (frame_hz <= 0.0) throw std::runtime_error("load_corpus: audio file lacks frame_hz");
    s.audio_words = align::pool_frames_to_words({frame_hz, frames}, s.words);
    s.token_text = load_matrix(dir / entry.at("text").get<std::string>());
    if (s.token_text.rows != static_cast<int>(s.tokens.size())) {
      throw std::runtime_error("load_corpus: token/embedding count mismatch for " +
                               entry.at("id").get<std::string>());
    }

    if (entry.contains("speaker_factors")) {
      Tensor2 sp = load_matrix(dir / entry.at("speaker_factors").get<std::string>());
      SpeakerFactors f;
      f.speaker_id = s.speaker_id;
      f.s = sp.data;
      s.speaker = std::move(f);
    }
    if (entry.contains("content_factors")) {
      ContentFactors f;
      f.word_vectors = load_matrix(dir / entry.at("content_factors").get<std::string>());
      f.durations.reserve(s.words.size());
      f.texts.reserve(s.words.size());
      for (std::size_t i = 0; i < s.words.size(); ++i) {
        f.durations.push_back(s.words[i].end - s.words[i].start);
        f.texts.push_back(s.words[i].text);
        if (i + 1 < s.words.size()) f.gaps.push_back(s.words[i + 1].start - s.words[i].end);
      }
      s.content = std::move(f);
    }
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace fedfusion::aug
