#include "dgnet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dgnet/error.hpp"
#include "dgnet/rng.hpp"

namespace dgnet {

namespace {

constexpr std::array kKindNames{"genuine", "disguised", "impostor"};
constexpr std::array kSourceNames{"dfw", "web"};
constexpr std::array kSplitNames{"train", "val", "test"};
constexpr std::array kProtocolNames{"impersonation", "obfuscation", "overall"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<const char*, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (s == names[i]) return static_cast<E>(i);
  }
  return std::nullopt;
}

int kind_rank(ImageKind k) { return static_cast<int>(k); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cache_key(const ImageRecord& rec) {
  std::string key = rec.path;
  if (rec.bbox) {
    key += "#" + std::to_string(rec.bbox->x) + "," + std::to_string(rec.bbox->y) + "," +
           std::to_string(rec.bbox->w) + "," + std::to_string(rec.bbox->h);
  }
  return key;
}

ImageRecord parse_record(const nlohmann::json& j, std::size_t line) {
  auto fail = [line](const std::string& msg) -> ParseError {
    return ParseError("manifest line " + std::to_string(line) + ": " + msg);
  };
  if (!j.is_object()) throw fail("expected a JSON object");
  auto field = [&](const char* name) {
    if (!j.contains(name) || !j[name].is_string()) throw fail(std::string("missing string field '") + name + "'");
    return j[name].get<std::string>();
  };
  static const std::set<std::string> known{"identity", "path", "kind", "source", "split", "bbox"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw fail("unknown field '" + key + "'");
  }

  ImageRecord rec;
  rec.identity = field("identity");
  rec.path = field("path");
  if (rec.identity.empty()) throw fail("empty identity");
  if (rec.path.empty()) throw fail("empty path");
  const auto kind = parse_kind(field("kind"));
  if (!kind) throw fail("unknown kind '" + field("kind") + "'");
  const auto source = parse_source(field("source"));
  if (!source) throw fail("unknown source '" + field("source") + "'");
  const auto split = parse_split(field("split"));
  if (!split) throw fail("unknown split '" + field("split") + "'");
  rec.kind = *kind;
  rec.source = *source;
  rec.split = *split;
  if (rec.source == ImageSource::web && rec.kind != ImageKind::genuine) {
    throw fail("web records must be kind 'genuine'");
  }
  if (j.contains("bbox") && !j["bbox"].is_null()) {
    const auto& b = j["bbox"];
    if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const auto& v) { return v.is_number_integer(); })) {
      throw fail("bbox must be [x,y,w,h] integers");
    }
    rec.bbox = BBox{b[0].get<std::int64_t>(), b[1].get<std::int64_t>(), b[2].get<std::int64_t>(), b[3].get<std::int64_t>()};
    if (rec.bbox->x < 0 || rec.bbox->y < 0 || rec.bbox->w <= 0 || rec.bbox->h <= 0) {
      throw fail("bbox needs nonnegative origin and positive size");
    }
  }
  return rec;
}

}  // namespace

std::string_view to_string(ImageKind k) { return kKindNames[static_cast<std::size_t>(k)]; }
std::string_view to_string(ImageSource s) { return kSourceNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Protocol p) { return kProtocolNames[static_cast<std::size_t>(p)]; }
std::optional<ImageKind> parse_kind(std::string_view s) { return lookup<ImageKind>(kKindNames, s); }
std::optional<ImageSource> parse_source(std::string_view s) { return lookup<ImageSource>(kSourceNames, s); }
std::optional<Split> parse_split(std::string_view s) { return lookup<Split>(kSplitNames, s); }
std::optional<Protocol> parse_protocol(std::string_view s) { return lookup<Protocol>(kProtocolNames, s); }

std::vector<ImageRecord> parse_manifest_text(std::string_view text) {
  std::vector<ImageRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    ImageRecord rec = parse_record(j, line_no);
    if (!seen.emplace(rec.identity, rec.path).second) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": duplicate record (" + rec.identity +
                       ", " + rec.path + ")");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ImageRecord> parse_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_manifest_text(ss.str());
}

void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path.string());
  for (const auto& r : records) {
    nlohmann::json j{{"identity", r.identity},
                     {"path", r.path},
                     {"kind", std::string(to_string(r.kind))},
                     {"source", std::string(to_string(r.source))},
                     {"split", std::string(to_string(r.split))}};
    if (r.bbox) j["bbox"] = {r.bbox->x, r.bbox->y, r.bbox->w, r.bbox->h};
    f << j.dump() << "\n";
  }
}

Tensor load_image(const ImageRecord& rec, const Shape& target, const std::filesystem::path& root) {
  if (target.size() != 3) throw ShapeError("load_image target must be (C,H,W)");
  std::filesystem::path p(rec.path);
  if (p.is_relative() && !root.empty()) p = root / p;
  if (!std::filesystem::exists(p)) throw IoError("image file not found: " + p.string());
  Tensor img = read_image(p);
  if (rec.bbox) img = crop(img, *rec.bbox);
  img = convert_channels(img, target[0]);
  return resize_bilinear(img, target[1], target[2]);
}

std::vector<ImageRecord> merge_weak_labels(const std::vector<ImageRecord>& dfw,
                                           const std::vector<ImageRecord>& web) {
  std::set<std::string> identities;
  std::set<std::string> paths;
  for (const auto& r : dfw) {
    identities.insert(r.identity);
    paths.insert(r.path);
  }
  std::set<std::string> unknown;
  for (const auto& r : web) {
    if (!identities.contains(r.identity)) unknown.insert(r.identity);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& id : unknown) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("web records reference identities absent from the base set: " + list);
  }
  std::vector<ImageRecord> out = dfw;
  for (auto r : web) {
    if (!paths.insert(r.path).second) continue;
    r.source = ImageSource::web;
    r.kind = ImageKind::genuine;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PairRecord> generate_pairs(const std::vector<ImageRecord>& records, Protocol protocol,
                                       std::uint64_t seed, std::optional<std::size_t> max_pairs) {
  if (!records.empty()) {
    const Split split = records.front().split;
    if (std::any_of(records.begin(), records.end(), [split](const auto& r) { return r.split != split; })) {
      throw ConfigError("generate_pairs expects records from a single split");
    }
  }
  std::map<std::string, std::vector<const ImageRecord*>> by_identity;
  for (const auto& r : records) by_identity[r.identity].push_back(&r);

  std::vector<PairRecord> pairs;
  for (auto& [identity, recs] : by_identity) {
    std::sort(recs.begin(), recs.end(), [](const ImageRecord* a, const ImageRecord* b) {
      if (a->kind != b->kind) return kind_rank(a->kind) < kind_rank(b->kind);
      return a->path < b->path;
    });
    for (std::size_t i = 0; i < recs.size(); ++i) {
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        const ImageRecord& a = *recs[i];
        const ImageRecord& b = *recs[j];
        bool keep = false;
        switch (protocol) {
          case Protocol::impersonation:
            keep = a.kind == ImageKind::genuine && b.kind == ImageKind::impostor;
            break;
          case Protocol::obfuscation:
            keep = a.kind == ImageKind::genuine && b.kind == ImageKind::disguised;
            break;
          case Protocol::overall:
            // Two impostors may or may not be the same person: no label exists.
            keep = !(a.kind == ImageKind::impostor && b.kind == ImageKind::impostor);
            break;
        }
        if (!keep) continue;
        const int y = (a.kind != ImageKind::impostor && b.kind != ImageKind::impostor) ? 1 : 0;
        pairs.push_back(PairRecord{a, b, y, protocol});
      }
    }
  }

  if (max_pairs && pairs.size() > *max_pairs) {
    std::vector<std::size_t> idx(pairs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    idx.resize(*max_pairs);
    std::sort(idx.begin(), idx.end());
    std::vector<PairRecord> kept;
    kept.reserve(idx.size());
    for (auto i : idx) kept.push_back(std::move(pairs[i]));
    pairs = std::move(kept);
  }
  return pairs;
}

std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> split_validation(
    const std::vector<ImageRecord>& records, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.identity);
  std::vector<std::string> ids(unique.begin(), unique.end());
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  if (!ids.empty() && n_val >= ids.size()) throw ConfigError("validation fraction leaves no training identities");
  const std::set<std::string> val_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));

  std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> out;
  for (const auto& r : records) {
    if (val_ids.contains(r.identity)) {
      ImageRecord v = r;
      v.split = Split::val;
      out.second.push_back(std::move(v));
    } else {
      out.first.push_back(r);
    }
  }
  return out;
}

std::vector<ImageRecord> filter_split(const std::vector<ImageRecord>& records, Split split) {
  std::vector<ImageRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out), [split](const auto& r) { return r.split == split; });
  return out;
}

std::string pairs_csv(const std::vector<PairRecord>& pairs) {
  std::string out = "identity,path_a,path_b,label,protocol\n";
  for (const auto& p : pairs) {
    out += csv_field(p.a.identity) + "," + csv_field(p.a.path) + "," + csv_field(p.b.path) + "," +
           std::to_string(p.y) + "," + std::string(to_string(p.protocol)) + "\n";
  }
  return out;
}

void write_pairs_csv(const std::filesystem::path& path, const std::vector<PairRecord>& pairs) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write pair list: " + path.string());
  f << pairs_csv(pairs);
}

ImageStore::ImageStore(std::filesystem::path root, Shape target) : root_(std::move(root)), target_(std::move(target)) {
  if (target_.size() != 3) throw ShapeError("ImageStore target must be (C,H,W)");
}

void ImageStore::put(const std::string& path, Tensor image) {
  if (image.shape() != target_) image = resize_bilinear(convert_channels(image, target_[0]), target_[1], target_[2]);
  std::lock_guard lock(mutex_);
  cache_[path] = std::move(image);
}

Tensor ImageStore::get(const ImageRecord& rec) {
  const std::string key = cache_key(rec);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    if (!rec.bbox) {
      if (auto it = cache_.find(rec.path); it != cache_.end()) return it->second;
    }
  }
  Tensor img = load_image(rec, target_, root_);
  std::lock_guard lock(mutex_);
  return cache_.emplace(key, std::move(img)).first->second;
}

}  // namespace dgnet
