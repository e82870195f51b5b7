#include <doctest.h>

#include <cmath>
#include <vector>

#include "strokeseg/checkpoint.hpp"
#include "strokeseg/networks.hpp"
#include "strokeseg/rng.hpp"

using namespace strokeseg;

namespace {

Tensor random_tensor(Rng& rng, Shape s) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = real(rng.normal());
  return t;
}

// Shapes of every node with the given op, in tape order.
std::vector<Shape> shapes_of(Tape& tape, std::string_view op) {
  std::vector<Shape> out;
  for (int id = 0; id < static_cast<int>(tape.size()); ++id) {
    const Var v{&tape, id};
    if (tape.op(v) == op) out.push_back(v.shape());
  }
  return out;
}

std::vector<real> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::size_t conv_bn_count(std::size_t cin, std::size_t cout, std::size_t k, bool bn) {
  return cin * cout * k * k + cout + (bn ? 2 * cout : 0);
}

}  // namespace

TEST_CASE("encoder follows the VGG11 ladder") {
  const auto plan = encoder_plan(SegNetConfig{});
  CHECK(plan == std::vector<std::vector<int>>{{64}, {128}, {256, 256}, {512, 512}, {512, 512}});
  SegNetConfig quarter;
  quarter.width_multiplier = 0.25;
  CHECK(encoder_plan(quarter).back() == std::vector<int>{128, 128});
  SegNetConfig tiny;
  tiny.width_multiplier = 1.0 / 1024;
  for (const auto& stage : encoder_plan(tiny))
    for (int c : stage) CHECK(c >= 1);
}

TEST_CASE("segmentation output shape for every width and decoder variant") {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {2, 3, 32, 64});
  for (double width : {1.0 / 16, 1.0 / 8, 1.0 / 4}) {
    for (bool skip : {true, false}) {
      SegNetConfig cfg;
      cfg.width_multiplier = width;
      cfg.skip_concat = skip;
      SegmentationNet net(cfg, 1);
      Tape tape;
      const auto out = net.forward(tape.constant(x), BatchNormMode::kTrainNoUpdate);
      CHECK(out.probs.shape() == Shape{2, 3, 32, 64});
      CHECK(tape.count_op("concat_channels") == (skip ? 5u : 0u));
      CHECK(tape.count_op("maxpool2d") == 5u);
      CHECK(tape.count_op("max_unpool2d") == 5u);
      for (int n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 32 * 64; ++i) {
          double total = 0;
          for (int c = 0; c < 3; ++c) total += out.probs.value().plane(n, c)[i];
          CHECK(std::abs(total - 1) < 1e-5);
        }
    }
  }
}

TEST_CASE("segmentation net rejects non-divisible input and bad configs") {
  SegNetConfig cfg;
  cfg.width_multiplier = 1.0 / 16;
  SegmentationNet net(cfg, 0);
  Tape tape;
  CHECK_THROWS_AS(net.forward(tape.constant(Tensor({1, 3, 48, 64})), BatchNormMode::kEval), Error);
  CHECK_THROWS_AS(net.forward(tape.constant(Tensor({1, 2, 32, 32})), BatchNormMode::kEval), Error);
  cfg.num_classes = 1;
  CHECK_THROWS_AS(SegmentationNet(cfg, 0), Error);
}

TEST_CASE("segmentation net is deterministic and near uniform at init") {
  SegNetConfig cfg;
  cfg.width_multiplier = 1.0 / 8;
  SegmentationNet a(cfg, 42), b(cfg, 42);
  CHECK(a.params().snapshot() == b.params().snapshot());
  const Tensor zero({1, 3, 32, 32});
  const Tensor pa = a.predict(zero);
  CHECK(pa == b.predict(zero));
  CHECK(pa == a.predict(zero));
  for (real p : pa.values()) CHECK(std::abs(p - 1.0 / 3) < 0.2);
  SegmentationNet c(cfg, 43);
  CHECK_FALSE(a.params().snapshot() == c.params().snapshot());
}

TEST_CASE("segmentation parameter count matches the closed form") {
  // Encoder stage widths, decoder mirrored with doubled input when skipping.
  const std::vector<std::vector<std::size_t>> ladder{{64}, {128}, {256, 256}, {512, 512}, {512, 512}};
  for (bool skip : {true, false}) {
    std::size_t expected = 0, cin = 3;
    for (const auto& stage : ladder)
      for (std::size_t c : stage) {
        expected += conv_bn_count(cin, c, 3, true);
        cin = c;
      }
    for (int k = 4; k >= 0; --k) {
      const std::size_t width = ladder[k].back(), target = k > 0 ? ladder[k - 1].back() : width;
      std::size_t in = skip ? 2 * width : width;
      for (std::size_t j = 0; j < ladder[k].size(); ++j) {
        const std::size_t out = j + 1 == ladder[k].size() ? target : width;
        expected += conv_bn_count(in, out, 3, true);
        in = out;
      }
    }
    expected += conv_bn_count(64, 3, 1, false);
    SegNetConfig cfg;
    cfg.skip_concat = skip;
    CHECK(SegmentationNet(cfg, 0).params().trainable_count() == expected);
  }
}

TEST_CASE("discriminator ladder, shapes and parameter count") {
  DiscriminatorConfig cfg;
  cfg.in_channels = 5;
  Discriminator d(cfg, 7);
  CHECK(d.channel_ladder() == std::vector<int>{32, 64, 128, 256, 512});

  std::size_t expected = 0, cin = 5;
  for (std::size_t j = 0; j < 5; ++j) {
    const std::size_t cout = std::size_t{32} << j;
    expected += conv_bn_count(cin, cout, 4, j >= 1 && j <= 3);
    cin = cout;
  }
  expected += 512 * 1 + 1;
  CHECK(d.params().trainable_count() == expected);

  Rng rng(1);
  Tape tape;
  const Var out = d.forward(tape.constant(random_tensor(rng, {1, 5, 96, 96})), BatchNormMode::kEval);
  const auto convs = shapes_of(tape, "conv2d");
  REQUIRE(convs.size() == 6);
  const int sizes[] = {48, 24, 12, 6, 3};
  for (int j = 0; j < 5; ++j) {
    CHECK(convs[j].h == sizes[j]);
    CHECK(convs[j].w == sizes[j]);
    CHECK(convs[j].c == 32 << j);
  }
  CHECK(tape.count_op("batchnorm2d") == 3u);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK((out.value()[0] > 0 && out.value()[0] < 1));
}

TEST_CASE("discriminator outputs, duplicates and input gradient") {
  DiscriminatorConfig cfg;
  cfg.in_channels = 3;
  cfg.out_units = 3;
  cfg.base_channels = 4;
  Discriminator d(cfg, 2);
  Rng rng(5);
  Tensor x = random_tensor(rng, {3, 3, 32, 32});
  for (std::size_t i = 0; i < x.plane(0, 0).size() * 3; ++i) x[x.numel() / 3 * 2 + i] = x[i];  // sample 2 = sample 0
  const Tensor p = d.predict(x);
  CHECK(p.shape() == Shape{3, 3, 1, 1});
  for (real v : p.values()) CHECK((v > 0 && v < 1));
  for (int u = 0; u < 3; ++u) CHECK(p.at(0, u, 0, 0) == p.at(2, u, 0, 0));

  Tape tape;
  const Var xin = tape.variable(x);
  tape.backward(sum(d.forward(xin, BatchNormMode::kEval, false)));
  double norm = 0;
  for (real g : values_of(tape.grad(xin))) norm += std::abs(g);
  CHECK(norm > 0);

  Tape bad;
  CHECK_THROWS_AS(d.forward(bad.constant(Tensor({1, 5, 32, 32})), BatchNormMode::kEval), Error);
}

TEST_CASE("encoder import") {
  SegNetConfig cfg;
  cfg.width_multiplier = 1.0 / 8;
  SegmentationNet source(cfg, 1), target(cfg, 2);
  const Tensor x = [] {
    Rng rng(6);
    return random_tensor(rng, {1, 3, 32, 32});
  }();
  const Tensor before = target.predict(x);

  Archive archive;
  archive.put_store("seg/", source.params());
  const std::vector<std::uint8_t> bytes = archive.serialize();
  const std::vector<Tensor> decoder_before = [&] {
    std::vector<Tensor> v;
    for (const auto& e : target.params())
      if (!e.name.starts_with("enc")) v.push_back(e.param.value);
    return v;
  }();
  import_encoder_weights(target, Archive::deserialize(bytes, "test"));

  std::size_t k = 0;
  for (const auto& e : target.params()) {
    if (e.name.starts_with("enc"))
      CHECK(e.param.value == source.params().get(e.name).value);
    else
      CHECK(e.param.value == decoder_before[k++]);
  }
  CHECK_FALSE(target.predict(x) == before);

  Archive bare;
  bare.put_store("", source.params());
  SegmentationNet again(cfg, 3);
  import_encoder_weights(again, bare);
  CHECK(again.params().get("enc1.conv0.weight").value == source.params().get("enc1.conv0.weight").value);

  SegNetConfig wide = cfg;
  wide.width_multiplier = 1.0 / 4;
  SegmentationNet mismatched(wide, 1);
  const auto snapshot = mismatched.params().snapshot();
  try {
    import_encoder_weights(mismatched, archive);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIncompatible);
    CHECK(std::string(e.what()).find("seg/enc1.conv0.weight") != std::string::npos);
  }
  CHECK(mismatched.params().snapshot() == snapshot);
}
