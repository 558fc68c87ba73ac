#include "dgnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dgnet/augment.hpp"
#include "dgnet/error.hpp"
#include "dgnet/image.hpp"
#include "dgnet/rng.hpp"

namespace dgnet {

namespace {

Tensor base_texture(std::size_t size, Rng& rng) {
  Tensor coarse({1, 4, 4});
  for (auto& v : coarse.data()) v = rng.uniform();
  Tensor tex = resize_bilinear(coarse, size, size);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double freq = rng.uniform(0.15, 0.45);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = std::cos(angle) * static_cast<double>(x) + std::sin(angle) * static_cast<double>(y);
      tex.at(0, y, x) = 0.6 * tex.at(0, y, x) + 0.4 * (0.5 + 0.5 * std::sin(freq * u + phase));
    }
  }
  // Mirror-symmetric like a frontal face, so horizontal flips keep identity.
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size / 2; ++x) {
      const double m = 0.5 * (tex.at(0, y, x) + tex.at(0, y, size - 1 - x));
      tex.at(0, y, x) = m;
      tex.at(0, y, size - 1 - x) = m;
    }
  }
  for (auto& v : tex.data()) v = 0.1 + 0.8 * v;
  return tex;
}

Tensor with_noise(Tensor img, double sigma, Rng& rng) {
  for (auto& v : img.data()) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return img;
}

Tensor disguise(const Tensor& base, const SyntheticConfig& cfg, Rng& rng) {
  Tensor img = base;
  const auto size = static_cast<std::int64_t>(cfg.size);
  const std::int64_t pw = rng.integer(size / 4, size * 3 / 8);
  const std::int64_t ph = rng.integer(size / 4, size * 3 / 8);
  const std::int64_t px = rng.integer(0, size - pw);
  const std::int64_t py = rng.integer(0, size - ph);
  const double fill = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.15) : rng.uniform(0.85, 1.0);
  for (std::int64_t y = py; y < py + ph; ++y) {
    for (std::int64_t x = px; x < px + pw; ++x) img.at(0, y, x) = fill;
  }
  img = rotate(img, rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg));
  return with_noise(std::move(img), cfg.noise, rng);
}

std::string id_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "id%02zu", i);
  return buf;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg) {
  if (cfg.identities < 2) throw ConfigError("synthetic corpus needs at least two identities");
  if (cfg.size < 8) throw ConfigError("synthetic images must be at least 8x8");
  Rng rng(cfg.seed);
  std::vector<Tensor> bases;
  for (std::size_t i = 0; i < cfg.identities; ++i) bases.push_back(base_texture(cfg.size, rng));

  SyntheticCorpus corpus;
  auto add = [&](std::vector<ImageRecord>& out, const std::string& id, const std::string& file, ImageKind kind,
                 ImageSource source, Split split, Tensor img) {
    const std::string path = id + "/" + file + ".f64";
    out.push_back(ImageRecord{id, path, kind, source, std::nullopt, split});
    corpus.images.emplace(path, std::move(img));
  };

  for (std::size_t i = 0; i < cfg.identities; ++i) {
    const std::string id = id_name(i);
    for (Split split : {Split::train, Split::test}) {
      const bool train = split == Split::train;
      const std::string tag(to_string(split));
      Rng r = Rng::stream(cfg.seed, {i, train ? 1u : 2u});
      for (std::size_t k = 0; k < (train ? cfg.genuine : cfg.test_genuine); ++k) {
        add(corpus.records, id, tag + "_genuine_" + std::to_string(k), ImageKind::genuine, ImageSource::dfw, split,
            with_noise(bases[i], cfg.noise, r));
      }
      for (std::size_t k = 0; k < (train ? cfg.disguised : cfg.test_disguised); ++k) {
        add(corpus.records, id, tag + "_disguised_" + std::to_string(k), ImageKind::disguised, ImageSource::dfw,
            split, disguise(bases[i], cfg, r));
      }
      for (std::size_t k = 0; k < (train ? cfg.impostors : cfg.test_impostors); ++k) {
        const std::size_t other = (i + 1 + r.below(cfg.identities - 1)) % cfg.identities;
        add(corpus.records, id, tag + "_impostor_" + std::to_string(k), ImageKind::impostor, ImageSource::dfw, split,
            with_noise(bases[other], cfg.noise, r));
      }
    }
    Rng rw = Rng::stream(cfg.seed, {i, 3u});
    for (std::size_t k = 0; k < cfg.web_per_identity; ++k) {
      // Web photos are looser matches: stronger noise and a small shift.
      Tensor img = translate(bases[i], rw.integer(-2, 2), rw.integer(-2, 2));
      add(corpus.web, id, "web_" + std::to_string(k), ImageKind::genuine, ImageSource::web, Split::train,
          with_noise(std::move(img), 2.0 * cfg.noise, rw));
    }
  }
  return corpus;
}

void SyntheticCorpus::install(ImageStore& store) const {
  for (const auto& [path, img] : images) store.put(path, img);
}

void SyntheticCorpus::write(const std::filesystem::path& dir) const {
  for (const auto& [path, img] : images) {
    const auto full = dir / path;
    std::filesystem::create_directories(full.parent_path());
    write_f64(full, img);
  }
  write_manifest(dir / "manifest.jsonl", records);
  if (!web.empty()) write_manifest(dir / "web.jsonl", web);
}

}  // namespace dgnet
