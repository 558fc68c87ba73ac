#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dgnet/dataset.hpp"

namespace dgnet {

/// Identity-labelled corpus of procedural textures for desk-scale runs.
///
/// Each identity gets a smooth base texture. Genuine images are the base
/// plus pixel noise; disguised images add an occluding patch and a rotation;
/// impostors are noisy near-duplicates of another identity's base. Train
/// and test records draw independent noise.
struct SyntheticConfig {
  std::size_t identities = 8;
  std::size_t genuine = 2;
  std::size_t disguised = 2;
  std::size_t impostors = 2;
  std::size_t test_genuine = 1;
  std::size_t test_disguised = 2;
  std::size_t test_impostors = 2;
  std::size_t web_per_identity = 0;  // extra weakly labelled genuine images
  std::size_t size = 32;
  double noise = 0.03;
  double max_rotation_deg = 12.0;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::vector<ImageRecord> records;  // train and test splits
  std::vector<ImageRecord> web;      // source=web, split=train
  std::map<std::string, Tensor> images;

  void install(ImageStore& store) const;
  /// Writes every image as .f64 plus manifest.jsonl (and web.jsonl when
  /// there are web records) under `dir`.
  void write(const std::filesystem::path& dir) const;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg);

}  // namespace dgnet
