#pragma once

// Small shared fixtures for the test suites.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedfusion/alignment.hpp"
#include "fedfusion/augmentation.hpp"
#include "fedfusion/federation.hpp"
#include "fedfusion/fusion.hpp"
#include "fedfusion/rng.hpp"

namespace testutil {

using namespace fedfusion;

inline fusion::FusionConfig small_model(int hidden = 8, int heads = 2, int max_len = 6,
                                        int mlp = 4) {
  fusion::FusionConfig cfg;
  cfg.hidden_dim = hidden;
  cfg.heads = heads;
  cfg.max_len = max_len;
  cfg.mlp_hidden = mlp;
  return cfg;
}

// Random padded sample with n_tokens active rows. Rows [1, pauses] act as
// pause slots: text row present, zero audio row, mask_a false. Row 0 stays
// a word so audio pooling always has support.
inline align::AlignedSample random_sample(const fusion::FusionConfig& cfg, std::uint64_t seed,
                                          int n_tokens, int pauses = 1) {
  Rng rng(seed);
  align::AlignedSample s;
  s.a = Tensor2::zeros(cfg.max_len, cfg.hidden_dim);
  s.t = Tensor2::zeros(cfg.max_len, cfg.hidden_dim);
  s.mask_a.assign(static_cast<std::size_t>(cfg.max_len), 0);
  s.mask_t.assign(static_cast<std::size_t>(cfg.max_len), 0);
  for (int i = 0; i < n_tokens; ++i) {
    bool pause = i > 0 && i <= pauses;
    s.mask_t[static_cast<std::size_t>(i)] = 1;
    for (int c = 0; c < cfg.hidden_dim; ++c) s.t.at(i, c) = rng.normal();
    if (!pause) {
      s.mask_a[static_cast<std::size_t>(i)] = 1;
      for (int c = 0; c < cfg.hidden_dim; ++c) s.a.at(i, c) = rng.normal();
    }
  }
  s.label = seed % 2 == 0 ? Label::cn : Label::ad;
  s.speaker_id = "spk-test";
  return s;
}

// Tiny factorized corpus configuration matched to an 8-dim model.
inline aug::SynthCorpusConfig small_synth(int n_per_class, std::uint64_t seed,
                                          double noise_std = 0.05) {
  aug::SynthCorpusConfig cfg;
  cfg.n_per_class = n_per_class;
  cfg.d_s = 4;
  cfg.d_c = 4;
  cfg.d = 8;
  cfg.noise_std = noise_std;
  cfg.seed = seed;
  cfg.min_words = 3;
  cfg.max_words = 6;
  return cfg;
}

// Aligned copies of a sample pool, for hand-built client states.
inline std::vector<align::AlignedSample> align_all(const std::vector<aug::Sample>& pool,
                                                   const fusion::FusionConfig& model) {
  std::vector<align::AlignedSample> out;
  out.reserve(pool.size());
  for (const aug::Sample& s : pool) {
    out.push_back(align::build_aligned_sample(s.tokens, s.audio_words, s.token_text,
                                              model.max_len, s.label, s.speaker_id));
  }
  return out;
}

// Fresh scratch directory under the system temp root.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / ("fedfusion_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
