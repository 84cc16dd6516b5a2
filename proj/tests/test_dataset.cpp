#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mesvar/dataset.hpp"
#include "mesvar/rng.hpp"
#include "mesvar/types.hpp"

#include "test_support.hpp"

#include <filesystem>
#include <fstream>

using namespace mesvar;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("mesvar_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("manifest round trip with 2 subjects, 3 channels") {
  const fs::path dir = make_temp_dir("roundtrip");
  write_file(dir / "m.json", R"({
    "sampling_rate_hz": 128,
    "channels": ["A", "B", "C"],
    "subjects": [
      {"id": "s1", "group": 1, "csv": "s1.csv"},
      {"id": "s2", "group": 2, "csv": "s2.csv"}
    ]
  })");
  write_file(dir / "s1.csv", "A,B,C\n1,2,3\n4,5,6\n7,8,9\n");
  write_file(dir / "s2.csv", "A,B,C\n0.5,-1.25,3e-2\n1,0,2\n");

  const StudyDataset dataset = load_manifest(dir / "m.json");
  CHECK(dataset.subjects.size() == 2);
  CHECK(dataset.channel_names == std::vector<std::string>{"A", "B", "C"});
  CHECK(dataset.sampling_rate_hz == 128.0);
  CHECK(dataset.subjects[0].series.time_points() == 3);
  CHECK(dataset.subjects[0].series.channels() == 3);
  CHECK(dataset.subjects[1].series.samples(0, 1) == -1.25);
  CHECK(dataset.subjects[1].group_index == 2);

  // save -> load reproduces samples bit-for-bit and preserves order/labels
  const fs::path out = make_temp_dir("roundtrip_out");
  const fs::path manifest = save_dataset(dataset, out);
  const StudyDataset reloaded = load_manifest(manifest);
  REQUIRE(reloaded.subjects.size() == dataset.subjects.size());
  CHECK(reloaded.channel_names == dataset.channel_names);
  for (std::size_t i = 0; i < dataset.subjects.size(); ++i) {
    CHECK(reloaded.subjects[i].subject_id == dataset.subjects[i].subject_id);
    CHECK(reloaded.subjects[i].group_index == dataset.subjects[i].group_index);
    CHECK(reloaded.subjects[i].series.samples == dataset.subjects[i].series.samples);
  }
}

TEST_CASE("round trip preserves awkward doubles bit-for-bit") {
  Rng rng(7);
  StudyDataset dataset;
  dataset.sampling_rate_hz = 128.0;
  dataset.channel_names = {"ch1", "ch2"};
  SubjectRecord rec;
  rec.subject_id = "s1";
  rec.group_index = 1;
  rec.series = testing::make_series(testing::gaussian_matrix(50, 2, rng));
  dataset.subjects.push_back(rec);
  rec.subject_id = "s2";
  rec.group_index = 2;
  rec.series = testing::make_series(testing::gaussian_matrix(50, 2, rng) * 1e-7);
  dataset.subjects.push_back(rec);

  const fs::path out = make_temp_dir("bits");
  const StudyDataset reloaded = load_manifest(save_dataset(dataset, out));
  for (std::size_t i = 0; i < dataset.subjects.size(); ++i)
    CHECK(reloaded.subjects[i].series.samples == dataset.subjects[i].series.samples);
}

TEST_CASE("channel mismatch between manifest and CSV header") {
  const fs::path dir = make_temp_dir("mismatch");
  write_file(dir / "m.json", R"({
    "sampling_rate_hz": 128,
    "channels": ["Fz", "Cz"],
    "subjects": [{"id": "s1", "group": 1, "csv": "s1.csv"}]
  })");
  write_file(dir / "s1.csv", "Fp1,Cz\n1,2\n3,4\n");
  CHECK_THROWS_AS(load_manifest(dir / "m.json"), DataError);
  CHECK_THROWS_WITH_AS(load_manifest(dir / "m.json"),
                       doctest::Contains("channel mismatch"), DataError);
}

TEST_CASE("non-finite sample reports subject file, channel and row") {
  const fs::path dir = make_temp_dir("nonfinite");
  write_file(dir / "m.json", R"({
    "sampling_rate_hz": 128,
    "channels": ["A"],
    "subjects": [{"id": "s1", "group": 1, "csv": "s1.csv"}]
  })");
  write_file(dir / "s1.csv", "A\n1\nnan\n2\n");
  try {
    load_manifest(dir / "m.json");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 2") != std::string::npos);
    CHECK(what.find("'A'") != std::string::npos);
    CHECK(what.find("s1.csv") != std::string::npos);
  }
}

TEST_CASE("missing manifest and missing csv") {
  const fs::path dir = make_temp_dir("missing");
  CHECK_THROWS_AS(load_manifest(dir / "nope.json"), DataError);
  write_file(dir / "m.json", R"({
    "sampling_rate_hz": 128,
    "channels": ["A"],
    "subjects": [{"id": "s1", "group": 1, "csv": "absent.csv"}]
  })");
  CHECK_THROWS_AS(load_manifest(dir / "m.json"), DataError);
}

TEST_CASE("schema violations") {
  const fs::path dir = make_temp_dir("schema");
  write_file(dir / "bad.json", "{ not json");
  CHECK_THROWS_AS(load_manifest(dir / "bad.json"), DataError);
  write_file(dir / "nogroup.json", R"({
    "sampling_rate_hz": 128,
    "channels": ["A"],
    "subjects": [{"id": "s1", "csv": "s1.csv"}]
  })");
  CHECK_THROWS_AS(load_manifest(dir / "nogroup.json"), DataError);
  write_file(dir / "badgroup.json", R"({
    "sampling_rate_hz": 128,
    "channels": ["A"],
    "subjects": [{"id": "s1", "group": 3, "csv": "s1.csv"}]
  })");
  write_file(dir / "s1.csv", "A\n1\n2\n");
  CHECK_THROWS_AS(load_manifest(dir / "badgroup.json"), DataError);
}

TEST_CASE("paper-scale manifest: 11 channels, fs=128, 3840 samples") {
  const fs::path dir = make_temp_dir("paper_scale");
  const std::vector<std::string> channels = {"Fp1", "Fp2", "Fz", "F7", "F8", "C3",
                                             "C4",  "P3",  "P4", "O1", "O2"};
  Rng rng(11);
  StudyDataset dataset;
  dataset.sampling_rate_hz = 128.0;
  dataset.channel_names = channels;
  SubjectRecord rec;
  rec.subject_id = "p1";
  rec.group_index = 1;
  rec.series = testing::make_series(testing::gaussian_matrix(3840, 11, rng));
  rec.series.channel_names = channels;
  dataset.subjects.push_back(rec);

  const StudyDataset loaded = load_manifest(save_dataset(dataset, dir));
  CHECK(loaded.subjects[0].series.time_points() == 3840);
  CHECK(loaded.subjects[0].series.channels() == 11);
  CHECK(loaded.channel_names == channels);
}

TEST_CASE("series invariant validation") {
  MultiChannelSeries bad = testing::make_series(Eigen::MatrixXd::Zero(5, 2));
  bad.channel_names = {"a", "a"};
  CHECK_THROWS_AS(validate_series(bad), DataError);

  MultiChannelSeries short_series = testing::make_series(Eigen::MatrixXd::Zero(1, 2));
  CHECK_THROWS_AS(validate_series(short_series), DataError);
}

TEST_CASE("default band set") {
  const auto bands = default_bands();
  REQUIRE(bands.size() == 5);
  CHECK(bands[0].name == "delta");
  CHECK(bands[0].low_hz == 0.5);
  CHECK(bands[0].high_hz == 4.0);
  CHECK(bands[4].name == "gamma");
  CHECK(bands[4].high_hz == 50.0);
  for (const auto& band : bands) validate_band(band, 128.0);
  CHECK_THROWS_AS(validate_band({"bad", 30.0, 70.0}, 128.0), DataError);
}
