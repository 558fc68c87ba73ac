#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dgnet/image.hpp"
#include "dgnet/tensor.hpp"

namespace dgnet {

enum class ImageKind { genuine, disguised, impostor };
enum class ImageSource { dfw, web };
enum class Split { train, val, test };
enum class Protocol { impersonation, obfuscation, overall };

std::string_view to_string(ImageKind k);
std::string_view to_string(ImageSource s);
std::string_view to_string(Split s);
std::string_view to_string(Protocol p);
std::optional<ImageKind> parse_kind(std::string_view s);
std::optional<ImageSource> parse_source(std::string_view s);
std::optional<Split> parse_split(std::string_view s);
std::optional<Protocol> parse_protocol(std::string_view s);

/// An impostor record depicts someone else but is filed under `identity`.
struct ImageRecord {
  std::string identity;
  std::string path;
  ImageKind kind = ImageKind::genuine;
  ImageSource source = ImageSource::dfw;
  std::optional<BBox> bbox;
  Split split = Split::train;
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// y == 1 iff neither image is an impostor.
struct PairRecord {
  ImageRecord a;
  ImageRecord b;
  int y = 0;
  Protocol protocol = Protocol::overall;
  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

/// JSON-lines manifest; blank lines are skipped.
std::vector<ImageRecord> parse_manifest(const std::filesystem::path& path);
std::vector<ImageRecord> parse_manifest_text(std::string_view text);
void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);

/// Crop to bbox if present, bilinear-resize to target (C,H,W), pixels in [0,1].
/// Relative record paths resolve against `root`.
Tensor load_image(const ImageRecord& rec, const Shape& target, const std::filesystem::path& root = {});

/// Union of the two sets; web records are forced to source=web, kind=genuine
/// and only exact-path duplicates are dropped.
std::vector<ImageRecord> merge_weak_labels(const std::vector<ImageRecord>& dfw,
                                           const std::vector<ImageRecord>& web);

/// Within-identity pairs, ordered by identity then anchor path. `max_pairs`
/// keeps a seeded subsample in the original order.
std::vector<PairRecord> generate_pairs(const std::vector<ImageRecord>& records, Protocol protocol,
                                       std::uint64_t seed = 0,
                                       std::optional<std::size_t> max_pairs = std::nullopt);

/// Identity-disjoint split; validation records are re-tagged Split::val.
std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> split_validation(
    const std::vector<ImageRecord>& records, double fraction, std::uint64_t seed);

std::vector<ImageRecord> filter_split(const std::vector<ImageRecord>& records, Split split);

/// CSV with header identity,path_a,path_b,label,protocol.
void write_pairs_csv(const std::filesystem::path& path, const std::vector<PairRecord>& pairs);
std::string pairs_csv(const std::vector<PairRecord>& pairs);

/// Loads and caches images at a fixed target shape. In-memory images may be
/// registered with put() so synthetic corpora never touch the disk.
/// get() is safe to call from several threads.
class ImageStore {
 public:
  ImageStore(std::filesystem::path root, Shape target);

  const Shape& target() const { return target_; }
  void put(const std::string& path, Tensor image);
  Tensor get(const ImageRecord& rec);

 private:
  std::filesystem::path root_;
  Shape target_;
  std::mutex mutex_;
  std::map<std::string, Tensor> cache_;
};

}  // namespace dgnet
