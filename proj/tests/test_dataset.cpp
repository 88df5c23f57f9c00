#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "protoeeg/dataset.hpp"
#include "protoeeg/errors.hpp"

using namespace protoeeg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("protoeeg_test_dataset_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_bitwise(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (auto b : bytes) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

SynthConfig small_synth(std::size_t n, std::uint64_t seed) {
  SynthConfig c;
  c.n_samples = n;
  c.seed = seed;
  return c;
}

double mean_votes(const SynthConfig& c) {
  const auto d = generate_synthetic(c);
  double s = 0.0;
  for (const auto& x : d.samples) s += x.votes;
  return s / static_cast<double>(d.samples.size());
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("generated samples have the declared shape and finite values") {
    const auto d = generate_synthetic(small_synth(60, 1));
    REQUIRE(d.samples.size() == 60);
    std::set<std::uint64_t> ids;
    for (const auto& s : d.samples) {
      CHECK(s.values.size() == kTimeSteps * kChannels);
      CHECK(s.votes <= 8);
      for (float v : s.values) REQUIRE(std::isfinite(v));
      ids.insert(s.sample_id);
    }
    CHECK(ids.size() == 60);
    CHECK(d.manifest.sample_count == 60);
    CHECK(d.manifest.generator_seed == 1);
  }

  TEST_CASE("generation is deterministic under seed") {
    const auto a = generate_synthetic(small_synth(40, 9));
    const auto b = generate_synthetic(small_synth(40, 9));
    const auto c = generate_synthetic(small_synth(40, 10));
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < 40; ++i) {
      all_same = all_same && a.samples[i].values == b.samples[i].values && a.samples[i].votes == b.samples[i].votes;
      any_diff = any_diff || a.samples[i].values != c.samples[i].values;
    }
    CHECK(all_same);
    CHECK(any_diff);
    CHECK(a.manifest == b.manifest);
  }

  TEST_CASE("no spikes: salience zero and few votes") {
    auto c = small_synth(1000, 2);
    c.spike_rate = 0.0;
    const auto d = generate_synthetic(c);
    for (double s : d.salience) REQUIRE(s == 0.0);
    CHECK(mean_votes(c) < 1.0);
  }

  TEST_CASE("salience one: nearly unanimous votes") {
    auto c = small_synth(1000, 3);
    c.spike_rate = 1.0;
    c.salience_min = c.salience_max = 1.0;
    CHECK(mean_votes(c) > 7.0);
  }

  TEST_CASE("expected votes are nondecreasing in salience") {
    const SynthConfig c;
    std::mt19937_64 rng(4);
    double previous = -1.0;
    for (int level = 0; level < 10; ++level) {
      const double s = level / 9.0;
      double total = 0.0;
      for (int k = 0; k < 4000; ++k) total += simulate_votes(s, c, rng);
      const double m = total / 4000.0;
      CHECK(m >= previous);
      previous = m;
    }
  }

  TEST_CASE("invalid generator configurations") {
    auto c = small_synth(0, 1);
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
    c = small_synth(10, 1);
    c.spike_rate = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_synth(10, 1);
    c.sharp_width_ms_min = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    nlohmann::json j = SynthConfig{};
    j["bogus"] = 1;
    CHECK_THROWS_AS(j.get<SynthConfig>(), ConfigError);
    j = SynthConfig{};
    j["annotators"].erase(0);
    CHECK_THROWS_AS(j.get<SynthConfig>(), ConfigError);
  }

  TEST_CASE("config JSON round trip") {
    SynthConfig c;
    c.n_samples = 77;
    c.spike_rate = 0.25;
    c.annotators[3].bias = 0.6;
    const auto back = nlohmann::json(c).get<SynthConfig>();
    CHECK(nlohmann::json(back) == nlohmann::json(c));
  }

  TEST_CASE("default generator fills every vote class") {
    const auto d = generate_synthetic(small_synth(10000, 5));
    const auto h = class_histogram(d.samples);
    std::size_t total = 0;
    for (auto n : h) {
      CHECK(n > 0);
      total += n;
    }
    CHECK(total == 10000);
  }

  TEST_CASE("class histogram") {
    CHECK(class_histogram({}) == std::array<std::size_t, 9>{});
    EEGSample s;
    s.votes = 8;
    auto h = class_histogram({s});
    CHECK(h[8] == 1);
    CHECK(h[0] == 0);
  }

  TEST_CASE("stratified split sizes and disjointness") {
    std::vector<EEGSample> samples(10000);
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> v(0, 8);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      samples[i].sample_id = i * 3 + 1;
      samples[i].votes = static_cast<std::uint8_t>(v(rng));
    }
    const auto m = split(samples, {}, 11);
    CHECK(std::abs(static_cast<long>(m.train_ids.size()) - 7300) <= 9);
    CHECK(std::abs(static_cast<long>(m.val_ids.size()) - 1200) <= 9);
    CHECK(std::abs(static_cast<long>(m.test_ids.size()) - 1500) <= 9);

    std::set<std::uint64_t> seen;
    for (const auto* ids : {&m.train_ids, &m.val_ids, &m.test_ids})
      for (auto id : *ids) CHECK(seen.insert(id).second);
    CHECK(seen.size() == samples.size());

    // Per class, each split is within one sample of its share.
    std::map<std::uint64_t, int> votes;
    for (const auto& s : samples) votes[s.sample_id] = s.votes;
    const auto h = class_histogram(samples);
    for (int c = 0; c < 9; ++c) {
      auto count = [&](const std::vector<std::uint64_t>& ids) {
        return static_cast<double>(std::count_if(ids.begin(), ids.end(), [&](auto id) { return votes[id] == c; }));
      };
      CHECK(std::abs(count(m.val_ids) - 0.12 * h[c]) <= 1.0);
      CHECK(std::abs(count(m.test_ids) - 0.15 * h[c]) <= 1.0);
      CHECK(std::abs(count(m.train_ids) - 0.73 * h[c]) <= 1.0);
    }
    CHECK(split(samples, {}, 11) == m);
    CHECK_FALSE(split(samples, {}, 12) == m);
  }

  TEST_CASE("small classes appear in every split") {
    std::vector<EEGSample> samples(3);
    for (std::size_t i = 0; i < 3; ++i) samples[i].sample_id = i;
    const auto m = split(samples, {}, 1);
    CHECK(m.train_ids.size() == 1);
    CHECK(m.val_ids.size() == 1);
    CHECK(m.test_ids.size() == 1);
  }

  TEST_CASE("degenerate split fractions") {
    std::vector<EEGSample> samples(20);
    for (std::size_t i = 0; i < 20; ++i) samples[i].sample_id = i;
    const auto m = split(samples, {1.0, 0.0, 0.0}, 1);
    CHECK(m.train_ids.size() == 20);
    CHECK(m.val_ids.empty());
    CHECK_THROWS_AS(split(samples, {0.5, 0.2, 0.2}, 1), ConfigError);
    CHECK_THROWS_AS(split({}, {}, 1), ConfigError);
  }

  TEST_CASE("file layout matches a hand-built encoding") {
    const auto dir = scratch("layout");
    std::vector<EEGSample> samples(2);
    for (std::size_t i = 0; i < 2; ++i) {
      samples[i].sample_id = 1000 + i;
      samples[i].votes = static_cast<std::uint8_t>(3 + i);
      samples[i].values = {0.5f, -1.25f, static_cast<float>(i), 7.0f, 1e-3f, -2.0f};
    }
    write_samples((dir / "a.peeg").string(), samples, 3, 2);

    std::vector<std::uint8_t> expected{'P', 'E', 'E', 'G'};
    put<std::uint32_t>(expected, 1);
    put<std::uint32_t>(expected, 2);
    put<std::uint32_t>(expected, 3);
    put<std::uint32_t>(expected, 2);
    std::vector<std::uint8_t> payload;
    for (const auto& s : samples) {
      put<std::uint64_t>(payload, s.sample_id);
      put<std::uint8_t>(payload, s.votes);
      for (float v : s.values) put<float>(payload, v);
    }
    expected.insert(expected.end(), payload.begin(), payload.end());
    put<std::uint32_t>(expected, crc32_bitwise(payload));
    CHECK(read_bytes(dir / "a.peeg") == expected);
  }

  TEST_CASE("save and load round trip is bit-exact") {
    const auto dir = scratch("roundtrip");
    const auto d = generate_synthetic(small_synth(25, 7));
    save_dataset(dir.string(), d.samples, d.manifest);
    const auto back = load_dataset(dir.string());
    CHECK(back.manifest == d.manifest);
    REQUIRE(back.samples.size() == 25);
    for (std::size_t i = 0; i < 25; ++i) {
      CHECK(back.samples[i].sample_id == d.samples[i].sample_id);
      CHECK(back.samples[i].votes == d.samples[i].votes);
      CHECK(std::memcmp(back.samples[i].values.data(), d.samples[i].values.data(),
                        d.samples[i].values.size() * sizeof(float)) == 0);
    }
    const auto test = back.subset(Split::test);
    CHECK(test.size() == d.manifest.test_ids.size());
    CHECK(back.find(d.samples[3].sample_id) != nullptr);
    CHECK(back.find(999999) == nullptr);
  }

  TEST_CASE("corrupted files raise format errors") {
    const auto dir = scratch("corrupt");
    const auto d = generate_synthetic(small_synth(5, 8));
    const auto path = dir / "x.peeg";
    write_samples(path.string(), d.samples, kTimeSteps);
    const auto good = read_bytes(path);

    auto bad = good;
    bad[0] = 'X';
    write_bytes(path, bad);
    CHECK_THROWS_AS(read_samples(path.string()), FormatError);

    bad = good;
    bad[4] = 9;
    write_bytes(path, bad);
    CHECK_THROWS_AS(read_samples(path.string()), FormatError);

    bad.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(good.size() / 2));
    write_bytes(path, bad);
    CHECK_THROWS_AS(read_samples(path.string()), FormatError);

    bad = good;
    bad[100] ^= 0x40;
    write_bytes(path, bad);
    CHECK_THROWS_WITH_AS(read_samples(path.string()), doctest::Contains("checksum"), FormatError);

    bad = good;
    bad.push_back(0);
    write_bytes(path, bad);
    CHECK_THROWS_AS(read_samples(path.string()), FormatError);

    bad.assign(good.begin(), good.begin() + 3);
    write_bytes(path, bad);
    CHECK_THROWS_WITH_AS(read_samples(path.string()), doctest::Contains("magic"), FormatError);
  }

  TEST_CASE("manifest mismatches are detected") {
    const auto dir = scratch("manifest");
    auto d = generate_synthetic(small_synth(6, 9));
    auto m = d.manifest;
    m.test_ids.push_back(424242);
    save_dataset(dir.string(), d.samples, m);
    const auto loaded = load_dataset(dir.string());
    CHECK_THROWS_AS(loaded.subset(Split::test), ReferenceError);

    m = d.manifest;
    m.sample_count = 7;
    save_dataset(dir.string(), d.samples, m);
    CHECK_THROWS_AS(load_dataset(dir.string()), FormatError);

    std::ofstream(dir / kManifestFile) << "{not json";
    CHECK_THROWS_AS(load_dataset(dir.string()), FormatError);
  }

  TEST_CASE("writer rejects invalid samples") {
    const auto dir = scratch("reject");
    EEGSample s;
    s.values.assign(kTimeSteps * kChannels, 0.0f);
    s.votes = 9;
    CHECK_THROWS_AS(write_samples((dir / "r.peeg").string(), {s}, kTimeSteps), ContractError);
    s.votes = 1;
    s.values[5] = std::nanf("");
    CHECK_THROWS_AS(write_samples((dir / "r.peeg").string(), {s}, kTimeSteps), NumericError);
    s.values.resize(10);
    CHECK_THROWS_AS(write_samples((dir / "r.peeg").string(), {s}, kTimeSteps), DimensionError);
  }
}
