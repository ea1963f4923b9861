#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedfusion/tensor.hpp"
#include "fedfusion/types.hpp"

namespace fedfusion::align {

struct TimedWord {
  std::string text;
  double start = 0.0;  // seconds
  double end = 0.0;
};

enum class TokenKind { word, comma, period, ellipsis };

struct Token {
  TokenKind kind = TokenKind::word;
  std::string text;
  double start = 0.0;   // word tokens only
  double end = 0.0;
  int word_index = -1;  // index into the source word list, -1 for markers
};

// Inter-word silence thresholds, shortest to longest.
struct PauseThresholds {
  double comma = 0.5;
  double period = 1.0;
  double ellipsis = 2.0;
};

struct FrameFeatures {
  double frame_hz = 0.0;
  Tensor2 matrix;  // n_frames x d_audio
};

// Padded word-level pair of modality streams, ready for the fusion model.
// Both streams index the same token axis; pause tokens carry a text row but
// a zero audio row with mask_a false. Masked rows are all-zero.
struct AlignedSample {
  Tensor2 a;  // max_len x d
  Tensor2 t;  // max_len x d
  std::vector<std::uint8_t> mask_a;
  std::vector<std::uint8_t> mask_t;
  Label label = Label::cn;
  std::string speaker_id;
};

// Inserts at most one pause marker per inter-word gap g:
// none for g < comma, comma for [comma, period), period for
// [period, ellipsis), ellipsis for g >= ellipsis. Word order is preserved.
// Throws on unsorted or overlapping words.
std::vector<Token> insert_pause_tokens(const std::vector<TimedWord>& words,
                                       const PauseThresholds& thresholds);

// Mean-pools frame rows into one row per word. Word spans are half-open
// [floor(start*hz), ceil(end*hz)) frame ranges, made disjoint by assigning
// boundary frames to the earlier word; an empty span falls back to the
// frame nearest the word midpoint. Throws if a span reaches beyond the
// audio duration.
Tensor2 pool_frames_to_words(const FrameFeatures& frames, const std::vector<TimedWord>& words);

// Assembles the padded/masked sample from a token stream, word-level audio
// rows and token-level text rows. Text embedding rows must match the token
// count ("token/embedding count mismatch"), audio rows the word count.
// Sequences longer than max_len are truncated.
AlignedSample build_aligned_sample(const std::vector<Token>& tokens, const Tensor2& pooled_audio,
                                   const Tensor2& token_text, int max_len, Label label,
                                   const std::string& speaker_id);

// Transcript ingestion format: one JSON document per recording.
struct Transcript {
  std::string speaker_id;
  Label label = Label::cn;
  std::vector<TimedWord> words;
};

Transcript load_transcript(const std::filesystem::path& path);
void save_transcript(const std::filesystem::path& path, const Transcript& t);

}  // namespace fedfusion::align
