#include "fedfusion/alignment.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fedfusion::align {

namespace {

const char* marker_text(TokenKind kind) {
  switch (kind) {
    case TokenKind::comma: return ",";
    case TokenKind::period: return ".";
    case TokenKind::ellipsis: return "...";
    default: return "";
  }
}

void check_words(const std::vector<TimedWord>& words) {
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i].start < 0.0 || words[i].end < words[i].start) {
      throw std::invalid_argument("insert_pause_tokens: word has invalid timestamps");
    }
    if (i > 0 && words[i].start < words[i - 1].end) {
      throw std::invalid_argument("insert_pause_tokens: words unsorted or overlapping");
    }
  }
}

}  // namespace

std::vector<Token> insert_pause_tokens(const std::vector<TimedWord>& words,
                                       const PauseThresholds& th) {
  if (!(th.comma < th.period && th.period < th.ellipsis)) {
    throw std::invalid_argument("insert_pause_tokens: thresholds must increase");
  }
  check_words(words);
  std::vector<Token> out;
  out.reserve(words.size() * 2);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) {
      double gap = words[i].start - words[i - 1].end;
      TokenKind kind = TokenKind::word;
      if (gap >= th.ellipsis) {
        kind = TokenKind::ellipsis;
      } else if (gap >= th.period) {
        kind = TokenKind::period;
      } else if (gap >= th.comma) {
        kind = TokenKind::comma;
      }
      if (kind != TokenKind::word) {
        Token marker;
        marker.kind = kind;
        marker.text = marker_text(kind);
        out.push_back(marker);
      }
    }
    Token word;
    word.kind = TokenKind::word;
    word.text = words[i].text;
    word.start = words[i].start;
    word.end = words[i].end;
    word.word_index = static_cast<int>(i);
    out.push_back(word);
  }
  return out;
}

Tensor2 pool_frames_to_words(const FrameFeatures& frames, const std::vector<TimedWord>& words) {
  if (frames.frame_hz <= 0.0) throw std::invalid_argument("pool_frames_to_words: frame_hz <= 0");
  check_words(words);
  const Tensor2& f = frames.matrix;
  Tensor2 out(static_cast<int>(words.size()), f.cols);
  int prev_end = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    int lo = static_cast<int>(std::floor(words[w].start * frames.frame_hz));
    int hi = static_cast<int>(std::ceil(words[w].end * frames.frame_hz));
    if (hi > f.rows) {
      throw std::out_of_range("pool_frames_to_words: word span beyond audio duration");
    }
    lo = std::max(lo, prev_end);  // boundary frames stay with the earlier word
    if (lo < hi) {
      for (int r = lo; r < hi; ++r) {
        for (int c = 0; c < f.cols; ++c) out.at(static_cast<int>(w), c) += f.at(r, c);
      }
      double inv = 1.0 / static_cast<double>(hi - lo);
      for (int c = 0; c < f.cols; ++c) out.at(static_cast<int>(w), c) *= inv;
      prev_end = hi;
    } else {
      // the whole span was claimed by earlier words; take the frame holding
      // the word midpoint
      double mid = 0.5 * (words[w].start + words[w].end) * frames.frame_hz;
      int r = std::min(f.rows - 1, std::max(0, static_cast<int>(std::floor(mid))));
      for (int c = 0; c < f.cols; ++c) out.at(static_cast<int>(w), c) = f.at(r, c);
    }
  }
  return out;
}

AlignedSample build_aligned_sample(const std::vector<Token>& tokens, const Tensor2& pooled_audio,
                                   const Tensor2& token_text, int max_len, Label label,
                                   const std::string& speaker_id) {
  if (tokens.empty()) throw std::invalid_argument("build_aligned_sample: empty sequence");
  if (max_len <= 0) throw std::invalid_argument("build_aligned_sample: max_len must be positive");
  if (token_text.rows != static_cast<int>(tokens.size())) {
    throw std::invalid_argument("build_aligned_sample: token/embedding count mismatch");
  }
  int n_words = 0;
  for (const Token& t : tokens) {
    if (t.kind == TokenKind::word) ++n_words;
  }
  if (pooled_audio.rows != n_words) {
    throw std::invalid_argument("build_aligned_sample: token/embedding count mismatch");
  }
  AlignedSample s;
  s.a = Tensor2(max_len, pooled_audio.cols);
  s.t = Tensor2(max_len, token_text.cols);
  s.mask_a.assign(static_cast<std::size_t>(max_len), 0);
  s.mask_t.assign(static_cast<std::size_t>(max_len), 0);
  s.label = label;
  s.speaker_id = speaker_id;
  int n = std::min<int>(max_len, static_cast<int>(tokens.size()));
  for (int i = 0; i < n; ++i) {
    const Token& tok = tokens[static_cast<std::size_t>(i)];
    for (int c = 0; c < token_text.cols; ++c) s.t.at(i, c) = token_text.at(i, c);
    s.mask_t[static_cast<std::size_t>(i)] = 1;
    if (tok.kind == TokenKind::word) {
      for (int c = 0; c < pooled_audio.cols; ++c) s.a.at(i, c) = pooled_audio.at(tok.word_index, c);
      s.mask_a[static_cast<std::size_t>(i)] = 1;
    }
  }
  return s;
}

Transcript load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_transcript: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  Transcript t;
  t.speaker_id = j.at("speaker_id").get<std::string>();
  t.label = label_from_string(j.at("label").get<std::string>());
  for (const auto& w : j.at("words")) {
    t.words.push_back({w.at("text").get<std::string>(), w.at("start").get<double>(),
                       w.at("end").get<double>()});
  }
  return t;
}

void save_transcript(const std::filesystem::path& path, const Transcript& t) {
  nlohmann::json words = nlohmann::json::array();
  for (const TimedWord& w : t.words) {
    words.push_back({{"text", w.text}, {"start", w.start}, {"end", w.end}});
  }
  nlohmann::json j{{"speaker_id", t.speaker_id}, {"label", to_string(t.label)}, {"words", words}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_transcript: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace fedfusion::align
