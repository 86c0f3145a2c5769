#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "spaconet/io.hpp"
#include "test_util.hpp"

using namespace spaconet;
namespace io = spaconet::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spaconet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void expect_parse_error_at(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

ModelConfig small_model() {
  ModelConfig m;
  m.channels = 16;
  m.heads = 2;
  return m;
}

}  // namespace

TEST(TensorFile, LayoutIsLittleEndian) {
  const std::string bytes = io::encode(Tensor({2, 1}, {1, 2}), io::DType::u16);
  ASSERT_EQ(bytes.size(), 4u + 2 + 8 + 4);
  EXPECT_EQ(bytes.substr(0, 4), "SPC1");
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[5], 2);
  EXPECT_EQ(bytes.substr(6, 8), std::string("\x02\0\0\0\x01\0\0\0", 8));
  EXPECT_EQ(bytes.substr(14), std::string("\x01\0\x02\0", 4));
}

TEST(TensorFile, RoundTripsAllDtypes) {
  Rng rng(1);
  const Tensor t = testutil::random_tensor({3, 4, 5}, rng);
  EXPECT_EQ(io::decode(io::encode(t, io::DType::f64)).tensor(), t);

  Tensor f = t;
  for (auto& v : f.values()) v = static_cast<float>(v);
  EXPECT_EQ(io::decode(io::encode(t, io::DType::f32)).tensor(), f);

  Tensor u({2, 3});
  for (auto& v : u.values()) v = static_cast<double>(rng.index(65536));
  const io::TensorFile back = io::decode(io::encode(u, io::DType::u16));
  EXPECT_EQ(back.dtype, io::DType::u16);
  EXPECT_EQ(back.tensor(), u);
}

TEST(TensorFile, ScalarAndEmptyTensors) {
  EXPECT_EQ(io::decode(io::encode(Tensor(Shape{}, 4.5), io::DType::f64)).tensor(), Tensor(Shape{}, 4.5));
  EXPECT_EQ(io::decode(io::encode(Tensor({0, 3}), io::DType::f32)).shape, (Shape{0, 3}));
}

TEST(TensorFile, LabelMapRoundTrip) {
  LabelMap m(2, 3, 5);
  m.cells = {0, 4, 1, 2, 3, 4};
  EXPECT_EQ(io::to_label_map(io::decode(io::encode(m)), 5), m);
  EXPECT_THROW(io::to_label_map(io::decode(io::encode(m)), 4), Error);
}

TEST(TensorFile, U16RejectsNonIntegers) {
  EXPECT_THROW(io::encode(Tensor::vector({0.5}), io::DType::u16), Error);
  EXPECT_THROW(io::encode(Tensor::vector({65536}), io::DType::u16), Error);
  EXPECT_THROW(io::encode(Tensor::vector({-1}), io::DType::u16), Error);
}

TEST(TensorFile, ErrorsReportByteOffsets) {
  const std::string good = io::encode(Tensor({2, 2}, 1.0), io::DType::f32);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  expect_parse_error_at([&] { io::decode(bad_magic); }, "byte 0");
  std::string bad_dtype = good;
  bad_dtype[4] = 9;
  expect_parse_error_at([&] { io::decode(bad_dtype); }, "byte 4");
  expect_parse_error_at([&] { io::decode(good.substr(0, good.size() - 1)); }, "byte 14");
  expect_parse_error_at([&] { io::decode(good.substr(0, 8)); }, "byte 6");
  expect_parse_error_at([&] { io::decode(good + "z"); }, "byte 30");
}

TEST(TensorFile, FilesAreWrittenAtomically) {
  const fs::path dir = scratch_dir("atomic");
  io::write_tensor(dir / "t.spc", Tensor::vector({1, 2, 3}), io::DType::f64);
  EXPECT_FALSE(fs::exists(dir / "t.spc.tmp"));
  EXPECT_EQ(io::read_tensor(dir / "t.spc").tensor(), Tensor::vector({1, 2, 3}));
  try {
    io::read_tensor(dir / "missing.spc");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST(Manifest, ParsesThreeAndFiveColumnRows) {
  const io::Manifest m = io::parse_manifest(
      "spaco-manifest v1 classes=4 objects=8\n"
      "a.spc\tb.spc\t3\n"
      "\n"
      "c.spc\td.spc\t0\tfi.spc\tfs.spc\n");
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.classes, 4u);
  EXPECT_EQ(m.objects, 8u);
  EXPECT_EQ(m.entries[0].label, 3u);
  EXPECT_FALSE(m.entries[0].image_features);
  EXPECT_EQ(*m.entries[1].spatial_features, "fs.spc");
  EXPECT_EQ(io::parse_manifest(io::format_manifest(m)).entries.size(), 2u);
}

TEST(Manifest, ErrorsCarryOffsets) {
  expect_parse_error_at([] { io::parse_manifest("manifest\n"); }, "byte 0");
  const std::string header = "spaco-manifest v1 classes=2 objects=3\n";
  expect_parse_error_at([&] { io::parse_manifest(header + "a\tb\n"); }, "byte " + std::to_string(header.size()));
  expect_parse_error_at([&] { io::parse_manifest(header + "a\tb\t2\n"); },
                        "byte " + std::to_string(header.size() + 4));
  expect_parse_error_at([&] { io::parse_manifest(header + "a\tb\tx\n"); }, "expected a class index");
}

TEST(RunConfigText, UnknownKeyIsConfigError) {
  try {
    io::parse_run_config("seed = 3\nlearning_rate = 0.1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
}

TEST(RunConfigText, InvalidValueNamesKey) {
  try {
    io::parse_run_config("stage2.dropout = 1.5\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("stage2.dropout"), std::string::npos);
  }
}

TEST(RunConfigText, ParsesAndRoundTrips) {
  const RunConfig c = io::parse_run_config(
      "# comment\nseed = 9\nchannels = 32\nbatch_size = 8\nstage2.batch_size = 4\nstage2.dropout = 0.25\n"
      "variant = encoder\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.model.channels, 32u);
  EXPECT_EQ(c.stage1.batch_size, 8u);
  EXPECT_EQ(c.stage2.batch_size, 4u);
  EXPECT_EQ(c.stage2.dropout, 0.25);
  EXPECT_EQ(c.stage1.dropout, 0.3);
  EXPECT_EQ(c.model.variant, Variant::encoder);
  const std::string text = io::format_run_config(c);
  EXPECT_EQ(io::format_run_config(io::parse_run_config(text)), text);
}

TEST(RunConfigText, DeskConfigMatchesLibrarySchedule) {
  const RunConfig file = io::read_run_config(fs::path(SPACONET_SOURCE_DIR) / "configs" / "desk.conf");
  EXPECT_EQ(io::format_run_config(file), io::format_run_config(desk_scale_run_config()));
}

TEST(Checkpoint, RoundTripRestoresEveryParameter) {
  RunConfig config;
  config.model = small_model();
  Rng rng(5);
  SpacoNet a(config.model, rng);
  for (auto& np : a.backbone_parameters()) np.param->frozen = true;
  TrainState state{3, 0.0123, "12345"};
  const io::Checkpoint ck = io::capture(a, config, 2, 3, state);
  const std::string bytes = io::encode(ck);
  const io::Checkpoint back = io::decode_checkpoint(bytes);
  EXPECT_EQ(back.stage, 2);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.last_gamma, 0.0123);
  EXPECT_EQ(back.rng_state, "12345");
  EXPECT_EQ(io::encode(back), bytes);

  Rng other(6);
  SpacoNet b(config.model, other);
  ASSERT_NE(parameter_hash(b.all_parameters()), parameter_hash(a.all_parameters()));
  io::restore(b, back);
  EXPECT_EQ(parameter_hash(b.all_parameters()), parameter_hash(a.all_parameters()));
  for (const auto& np : b.backbone_parameters()) EXPECT_TRUE(np.param->frozen);
}

TEST(Checkpoint, RefusesDifferentModel) {
  RunConfig config;
  config.model = small_model();
  Rng rng(7);
  SpacoNet a(config.model, rng);
  const io::Checkpoint ck = io::capture(a, config, 1, 0, {});
  ModelConfig wider = small_model();
  wider.channels = 32;
  SpacoNet b(wider, rng);
  try {
    io::restore(b, ck);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Checkpoint, MissingFileAndCorruptHeader) {
  try {
    io::read_checkpoint("/nonexistent/ck.spck");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  expect_parse_error_at([] { io::decode_checkpoint("not a checkpoint\n"); }, "byte 0");
}

TEST(Generated, WrittenCorpusLoadsBack) {
  const fs::path dir = scratch_dir("generated");
  const GeneratedDataset g = generate_dataset(confounded_spec(), 4, 2);
  io::write_generated(dir, g);
  const Dataset train = io::load_dataset(io::read_manifest(dir / "train.manifest"));
  ASSERT_EQ(train.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(train.labels[i], g.train[i].label);
    // Images are stored as 32-bit floats by the generator, so f32 storage is exact.
    EXPECT_EQ(train.samples[i].image, g.train[i].image);
    EXPECT_EQ(train.samples[i].scores.data(), g.train[i].scores.data());
  }
  EXPECT_EQ(io::load_dataset(io::read_manifest(dir / "test.manifest")).size(), 2u);
}

TEST(Evaluation, ConstantClassifierOnBalancedSetScoresQuarter) {
  const GeneratedDataset g = generate_dataset(confounded_spec(), 0, 8);
  const Dataset test = to_dataset(g.test, g.spec);
  Rng rng(8);
  SpacoNet model(small_model(), rng);
  model.head.fc.weight.value.fill(0.0);
  model.head.fc.bias.value = Tensor::vector({1, 0, 0, 0});
  const auto p = predict(model, test);
  for (auto y : p) EXPECT_EQ(y, 0u);
  EXPECT_EQ(top1_accuracy(p, test.labels), 0.25);
}
