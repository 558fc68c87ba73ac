#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "dgnet/augment.hpp"
#include "dgnet/dataset.hpp"
#include "dgnet/error.hpp"
#include "dgnet/image.hpp"
#include "dgnet/rng.hpp"
#include "support.hpp"

using namespace dgnet;

namespace {

ImageRecord rec(std::string id, std::string path, ImageKind kind, Split split = Split::train) {
  ImageRecord r;
  r.identity = std::move(id);
  r.path = std::move(path);
  r.kind = kind;
  r.split = split;
  return r;
}

using Triple = std::tuple<std::string, std::string, int>;

std::set<Triple> triples(const std::vector<PairRecord>& pairs) {
  std::set<Triple> out;
  for (const auto& p : pairs) out.emplace(p.a.path, p.b.path, p.y);
  return out;
}

// 4x4 P5 image with pixel values 0, 17, 34, ... 255
void write_ramp_pgm(const std::filesystem::path& path) {
  std::string bytes = "P5\n# ramp\n4 4\n255\n";
  for (int i = 0; i < 16; ++i) bytes.push_back(static_cast<char>(i * 17));
  testing::spit(path, bytes);
}

}  // namespace

TEST_CASE("manifest parsing") {
  SUBCASE("well-formed line") {
    const auto recs = parse_manifest_text(
        R"({"identity":"id01","path":"a.pgm","kind":"genuine","source":"dfw","split":"train"})");
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].identity == "id01");
    CHECK(recs[0].path == "a.pgm");
    CHECK(recs[0].kind == ImageKind::genuine);
    CHECK(recs[0].source == ImageSource::dfw);
    CHECK(recs[0].split == Split::train);
    CHECK_FALSE(recs[0].bbox.has_value());
  }
  SUBCASE("bbox") {
    const auto recs = parse_manifest_text(
        R"({"identity":"id01","path":"a.pgm","kind":"impostor","source":"dfw","split":"test","bbox":[1,2,3,4]})");
    CHECK(recs[0].bbox == BBox{1, 2, 3, 4});
  }
  SUBCASE("invalid enum names the line") {
    try {
      parse_manifest_text("\n" R"({"identity":"id01","path":"a.pgm","kind":"imposter2","source":"dfw","split":"train"})");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("unknown split and source") {
    CHECK_THROWS_AS(parse_manifest_text(R"({"identity":"a","path":"p","kind":"genuine","source":"dfw","split":"dev"})"),
                    ParseError);
    CHECK_THROWS_AS(parse_manifest_text(R"({"identity":"a","path":"p","kind":"genuine","source":"bing","split":"train"})"),
                    ParseError);
  }
  SUBCASE("duplicate record") {
    const std::string line = R"({"identity":"id01","path":"a.pgm","kind":"genuine","source":"dfw","split":"train"})";
    CHECK_THROWS_AS(parse_manifest_text(line + "\n" + line), ParseError);
  }
  SUBCASE("web records are genuine") {
    CHECK_THROWS_AS(parse_manifest_text(R"({"identity":"a","path":"p","kind":"disguised","source":"web","split":"train"})"),
                    ParseError);
  }
  SUBCASE("empty input") { CHECK(parse_manifest_text("").empty()); }
  SUBCASE("file roundtrip") {
    testing::TempDir dir("manifest");
    std::vector<ImageRecord> recs{rec("id01", "a.pgm", ImageKind::genuine), rec("id01", "b.pgm", ImageKind::impostor, Split::test)};
    recs[1].bbox = BBox{0, 0, 2, 2};
    write_manifest(dir / "m.jsonl", recs);
    CHECK(parse_manifest(dir / "m.jsonl") == recs);
    testing::spit(dir / "empty.jsonl", "");
    CHECK(parse_manifest(dir / "empty.jsonl").empty());
    CHECK_THROWS_AS(parse_manifest(dir / "absent.jsonl"), IoError);
  }
}

TEST_CASE("load_image") {
  testing::TempDir dir("load");
  write_ramp_pgm(dir / "ramp.pgm");
  ImageRecord r = rec("id01", "ramp.pgm", ImageKind::genuine);

  SUBCASE("native size is only scaled") {
    const Tensor t = load_image(r, {1, 4, 4}, dir.path());
    for (std::size_t i = 0; i < 16; ++i) CHECK(t[i] == static_cast<double>(i * 17) / 255.0);
    CHECK(t[15] == 1.0);
  }
  SUBCASE("bbox crop to the top-left quadrant") {
    r.bbox = BBox{0, 0, 2, 2};
    const Tensor t = load_image(r, {1, 2, 2}, dir.path());
    CHECK(t == Tensor({1, 2, 2}, {0.0, 17.0 / 255, 68.0 / 255, 85.0 / 255}));
  }
  SUBCASE("bbox out of bounds") {
    r.bbox = BBox{3, 3, 2, 2};
    CHECK_THROWS_AS(load_image(r, {1, 2, 2}, dir.path()), DomainError);
  }
  SUBCASE("missing file") {
    r.path = "nope.pgm";
    CHECK_THROWS_AS(load_image(r, {1, 4, 4}, dir.path()), IoError);
  }
  SUBCASE("channel replication and resize") {
    const Tensor t = load_image(r, {3, 8, 8}, dir.path());
    CHECK(t.shape() == Shape{3, 8, 8});
    CHECK(t.at(0, 3, 5) == t.at(2, 3, 5));
    for (double v : t.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
  SUBCASE("f64 roundtrip") {
    const Tensor img({1, 3, 2}, {0.0, 0.1, 0.2, 0.3, 0.4, 1.0});
    write_f64(dir / "x.f64", img);
    CHECK(read_image(dir / "x.f64") == img);
  }
}

TEST_CASE("merge_weak_labels") {
  const std::vector<ImageRecord> dfw{rec("id01", "a", ImageKind::genuine), rec("id01", "b", ImageKind::disguised),
                                     rec("id02", "c", ImageKind::genuine)};
  SUBCASE("empty web set") { CHECK(merge_weak_labels(dfw, {}) == dfw); }
  SUBCASE("unknown identity is listed") {
    try {
      merge_weak_labels(dfw, {rec("idX", "w", ImageKind::genuine)});
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("idX") != std::string::npos);
    }
  }
  SUBCASE("web records are tagged and exact paths deduplicated") {
    const auto merged = merge_weak_labels(dfw, {rec("id02", "w1", ImageKind::genuine), rec("id02", "c", ImageKind::genuine)});
    REQUIRE(merged.size() == 4);
    CHECK(merged[3].source == ImageSource::web);
    CHECK(merged[3].kind == ImageKind::genuine);
  }
  SUBCASE("325 identities gain web images and end with 3 to 5 genuine each") {
    std::vector<ImageRecord> base, web;
    for (int i = 0; i < 325; ++i) {
      const std::string id = "id" + std::to_string(i);
      base.push_back(rec(id, id + "/g.pgm", ImageKind::genuine));
      for (int k = 0; k < 2 + i % 3; ++k) web.push_back(rec(id, id + "/web" + std::to_string(k) + ".jpg", ImageKind::genuine));
    }
    const auto merged = merge_weak_labels(base, web);
    CHECK(merged.size() == base.size() + web.size());
    std::map<std::string, int> genuine;
    for (const auto& r : merged) genuine[r.identity] += r.kind == ImageKind::genuine ? 1 : 0;
    CHECK(genuine.size() == 325);
    for (const auto& [id, n] : genuine) CHECK((n >= 3 && n <= 5));
  }
}

TEST_CASE("generate_pairs examples") {
  const std::vector<ImageRecord> recs{rec("id01", "m1", ImageKind::impostor), rec("id01", "d2", ImageKind::disguised),
                                      rec("id01", "g", ImageKind::genuine), rec("id01", "d1", ImageKind::disguised)};
  CHECK(triples(generate_pairs(recs, Protocol::obfuscation)) == std::set<Triple>{{"g", "d1", 1}, {"g", "d2", 1}});
  CHECK(triples(generate_pairs(recs, Protocol::impersonation)) == std::set<Triple>{{"g", "m1", 0}});
  const auto overall = generate_pairs(recs, Protocol::overall);
  CHECK(overall.size() == 6);
  CHECK(triples(overall) == std::set<Triple>{{"g", "d1", 1}, {"g", "d2", 1}, {"d1", "d2", 1},
                                             {"g", "m1", 0}, {"d1", "m1", 0}, {"d2", "m1", 0}});
  for (const auto& p : overall) CHECK(p.protocol == Protocol::overall);

  SUBCASE("no impostors gives an empty impersonation list") {
    CHECK(generate_pairs({rec("id01", "g", ImageKind::genuine)}, Protocol::impersonation).empty());
  }
  SUBCASE("impostor pairs are excluded") {
    const std::vector<ImageRecord> two{rec("id01", "m1", ImageKind::impostor), rec("id01", "m2", ImageKind::impostor)};
    CHECK(generate_pairs(two, Protocol::overall).empty());
  }
  SUBCASE("mixed splits are rejected") {
    CHECK_THROWS_AS(generate_pairs({rec("a", "g", ImageKind::genuine), rec("a", "d", ImageKind::disguised, Split::test)},
                                   Protocol::overall),
                    ConfigError);
  }
  SUBCASE("subsampling keeps order and is seeded") {
    std::vector<ImageRecord> many;
    for (int i = 0; i < 6; ++i) many.push_back(rec("id", "d" + std::to_string(i), ImageKind::disguised));
    const auto all = generate_pairs(many, Protocol::overall);
    const auto sub = generate_pairs(many, Protocol::overall, 4, 5);
    CHECK(sub.size() == 5);
    CHECK(sub == generate_pairs(many, Protocol::overall, 4, 5));
    auto it = all.begin();
    for (const auto& p : sub) {
      it = std::find(it, all.end(), p);
      CHECK(it != all.end());
    }
  }
  SUBCASE("csv export") {
    const std::string csv = pairs_csv(generate_pairs(recs, Protocol::impersonation));
    CHECK(csv == "identity,path_a,path_b,label,protocol\nid01,g,m1,0,impersonation\n");
  }
}

TEST_CASE("augmentation") {
  Rng seed_rng(4);
  Tensor img({1, 8, 8});
  for (auto& v : img.data()) v = seed_rng.uniform();

  SUBCASE("null augmentation is the identity") {
    Rng rng(1);
    CHECK(augment(img, AugmentConfig::none(), rng) == img);
  }
  SUBCASE("double flip") { CHECK(hflip(hflip(img)) == img); }
  SUBCASE("flip mirrors columns") { CHECK(hflip(img).at(0, 2, 0) == img.at(0, 2, 7)); }
  SUBCASE("zero rotation and translation") {
    CHECK(rotate(img, 0.0) == img);
    CHECK(translate(img, 0, 0) == img);
    const Tensor shifted = translate(img, 1, 0);
    CHECK(shifted.at(0, 3, 0) == 0.0);
    CHECK(shifted.at(0, 3, 4) == img.at(0, 3, 3));
  }
  SUBCASE("same generator state gives the same output") {
    AugmentConfig cfg;
    Rng a = Rng::stream(9, {1, 2});
    Rng b = Rng::stream(9, {1, 2});
    CHECK(augment(img, cfg, a) == augment(img, cfg, b));
  }
  SUBCASE("shape and range are preserved") {
    AugmentConfig cfg;
    cfg.gaussian_sigma = 0.5;
    for (std::uint64_t s = 0; s < 30; ++s) {
      Rng rng(s);
      const Tensor out = augment(img, cfg, rng);
      CHECK(out.shape() == img.shape());
      for (double v : out.data()) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
  SUBCASE("bad config") {
    AugmentConfig cfg;
    cfg.flip_prob = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = AugmentConfig{};
    cfg.gaussian_sigma = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("split_validation") {
  std::vector<ImageRecord> recs;
  for (int i = 0; i < 10; ++i)
    for (int k = 0; k < 3; ++k) recs.push_back(rec("id" + std::to_string(i), "p" + std::to_string(i) + "_" + std::to_string(k), ImageKind::genuine));

  SUBCASE("fraction zero") {
    const auto [train, val] = split_validation(recs, 0.0, 1);
    CHECK(train == recs);
    CHECK(val.empty());
  }
  SUBCASE("ten identities at 0.2") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto [train, val] = split_validation(recs, 0.2, seed);
      std::set<std::string> t, v;
      for (const auto& r : train) t.insert(r.identity);
      for (const auto& r : val) {
        v.insert(r.identity);
        CHECK(r.split == Split::val);
      }
      CHECK(v.size() == 2);
      CHECK(t.size() == 8);
      for (const auto& id : v) CHECK_FALSE(t.contains(id));
      CHECK(train.size() + val.size() == recs.size());
    }
  }
  SUBCASE("deterministic") { CHECK(split_validation(recs, 0.3, 5) == split_validation(recs, 0.3, 5)); }
  SUBCASE("empty train set") {
    CHECK_THROWS_AS(split_validation(recs, 0.99, 1), ConfigError);
    CHECK_THROWS_AS(split_validation(recs, 1.0, 1), ConfigError);
  }
}

TEST_CASE("image store") {
  ImageStore store({}, {1, 4, 4});
  const Tensor img({1, 4, 4}, 0.25);
  store.put("mem/a.f64", img);
  CHECK(store.get(rec("id", "mem/a.f64", ImageKind::genuine)) == img);
  CHECK_THROWS_AS(store.get(rec("id", "mem/absent.f64", ImageKind::genuine)), IoError);
}
