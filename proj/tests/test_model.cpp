#include <doctest.h>

#include <random>
#include <sstream>

#include "gcnn/checkpoint.hpp"
#include "gcnn/error.hpp"
#include "gcnn/kernels.hpp"
#include "gcnn/model.hpp"
#include "gcnn/verify.hpp"

using namespace gcnn;

namespace {

Tensor rnd(const Shape& sample, std::size_t batch, std::uint64_t seed) {
  Shape dims{batch};
  dims.insert(dims.end(), sample.begin(), sample.end());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t(dims);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void train_steps(Model& m, const Tensor& x, const std::vector<int>& y, int steps, double lr = 0.05) {
  for (int s = 0; s < steps; ++s) {
    m.zero_grads();
    const auto r = kernels::softmax_cross_entropy(m.logits(x, Mode::Train), y);
    m.backward(r.grad_logits);
    m.sgd_step(lr);
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

std::string checkpoint_bytes(const Model& m) {
  std::ostringstream os;
  save_checkpoint(m, os);
  return os.str();
}

}  // namespace

TEST_CASE("default gCNN rows and parameter bytes") {
  auto h = std::make_shared<const IcosphereHierarchy>(IcosphereHierarchy::build(6));
  const Model g = build_gcnn(h, GcnnConfig{});
  const auto rows = g.describe();
  REQUIRE(rows.size() == 25);
  CHECK(rows.front().name == "Convolution 1");
  CHECK(rows.front().input == Shape{40962, 2});
  CHECK(rows[3].output == Shape{10242, 36});
  CHECK(rows[19].output == Shape{42, 36});
  CHECK(rows.back().output == Shape{2});

  const auto report = parameter_report(g);
  auto weights_of = [&](const std::string& name) {
    for (const auto& r : report.rows)
      if (r.name == name) return r.weights;
    return std::size_t{0};
  };
  CHECK(4 * weights_of("Convolution 1") == 7200);
  for (int k = 2; k <= 5; ++k) CHECK(4 * weights_of("Convolution " + std::to_string(k)) == 129600);
  CHECK(4 * weights_of("Fully connected layer 6") == 302400);
  CHECK(4 * weights_of("Fully connected layer 7") == 400);

  const AuditResult a = audit_against_table(g);
  CHECK(a.rows_ok);
  for (const auto& l : a.lines) CHECK_MESSAGE(l.matches, l.expectation.name);
  // Row sums give ~0.79 MB while the printed total is 1.63 MB.
  CHECK(a.table_total_bytes == 832088);
  CHECK_FALSE(a.total_ok);
}

TEST_CASE("default pCNN rows and parameter bytes") {
  const Model p = build_pcnn(PcnnConfig{});
  const auto rows = p.describe();
  REQUIRE(rows.size() == 19);
  CHECK(rows.front().input == Shape{224, 224, 2});
  CHECK(rows.front().output == Shape{54, 54, 64});
  CHECK(rows[14].output == Shape{6, 6, 64});
  const auto report = parameter_report(p);
  CHECK(4 * (report.rows.front().weights + report.rows.front().biases) == 62208);
  CHECK(4 * report.rows.front().weights == 61952);
  const AuditResult a = audit_against_table(p);
  CHECK(a.rows_ok);
  CHECK(a.total_ok);
}

TEST_CASE("audit needs a default-sized model") {
  CHECK_THROWS_AS(audit_against_table(verify::gradient_gcnn()), ConfigError);
}

TEST_CASE("initialization is deterministic per seed") {
  const Model a = verify::gradient_gcnn(3), b = verify::gradient_gcnn(3), c = verify::gradient_gcnn(4);
  CHECK(a.snapshot() == b.snapshot());
  CHECK(a.snapshot() != c.snapshot());
}

TEST_CASE("training is deterministic") {
  Model a = verify::gradient_gcnn(1), b = verify::gradient_gcnn(1);
  const Tensor x = rnd(a.input_shape(), 6, 2);
  const std::vector<int> y{0, 1, 0, 1, 1, 0};
  train_steps(a, x, y, 5);
  train_steps(b, x, y, 5);
  CHECK(a.snapshot() == b.snapshot());
  CHECK(a.logits(x, Mode::Eval) == b.logits(x, Mode::Eval));
}

TEST_CASE("frozen rows stay bit-identical") {
  for (Model m : {verify::gradient_gcnn(2), verify::gradient_pcnn(2)}) {
    const std::size_t head = m.head_start();
    m.freeze_prefix(head);
    CHECK(m.frozen_count() == head);
    const auto before = m.snapshot();
    const Tensor x = rnd(m.input_shape(), 4, 5);
    train_steps(m, x, {0, 1, 1, 0}, 4);
    const auto after = m.snapshot();
    bool head_changed = false;
    std::size_t k = 0;
    for (std::size_t row = 0; row < m.layer_count(); ++row)
      for (std::size_t p = 0; p < m.layer(row).params().size(); ++p, ++k) {
        if (row < head) CHECK(before[k] == after[k]);
        else head_changed = head_changed || before[k] != after[k];
      }
    CHECK(head_changed);
  }
  Model m = verify::gradient_gcnn();
  CHECK_THROWS_AS(m.freeze_prefix(m.layer_count() + 1), ConfigError);
}

TEST_CASE("suffix reproduces the tail of the network") {
  Model m = verify::gradient_gcnn(4);
  const Tensor x = rnd(m.input_shape(), 3, 8);
  const std::size_t head = m.head_start();
  const Tensor feats = m.forward_range(x, Mode::Eval, 0, head);
  Model tail = m.suffix(head);
  CHECK(tail.input_shape() == m.describe()[head].input);
  CHECK(tail.describe().front().row == head + 1);
  CHECK(max_abs_diff(tail.logits(feats, Mode::Eval), m.logits(x, Mode::Eval)) < 1e-12);
  tail.reinitialize_from(0, 99);
  CHECK(tail.snapshot() != m.suffix(head).snapshot());
}

TEST_CASE("logits omit softmax, probabilities sum to one") {
  Model m = verify::gradient_pcnn(5);
  const Tensor x = rnd(m.input_shape(), 3, 9);
  const Tensor p = m.probabilities(x);
  REQUIRE(p.dims() == Shape{3, 2});
  for (std::size_t s = 0; s < 3; ++s) CHECK(p[2 * s] + p[2 * s + 1] == doctest::Approx(1.0));
  const Tensor z = m.logits(x, Mode::Eval);
  CHECK(p == kernels::softmax(z));
}

TEST_CASE("sgd refuses non-finite gradients without partial updates") {
  Model m = verify::gradient_gcnn(6);
  const Tensor x = rnd(m.input_shape(), 2, 10);
  m.zero_grads();
  const auto r = kernels::softmax_cross_entropy(m.logits(x, Mode::Train), std::vector<int>{0, 1});
  m.backward(r.grad_logits);
  const auto before = m.snapshot();
  m.layer(m.layer_count() - 2).params().front().grad[0] = std::nan("");
  CHECK_THROWS_AS(m.sgd_step(0.1), NumericError);
  CHECK(m.snapshot() == before);
}

TEST_CASE("config JSON round trip") {
  GcnnConfig g = verify::gradient_gcnn().is_gcnn() ? std::get<GcnnConfig>(verify::gradient_gcnn().config())
                                                    : GcnnConfig{};
  g.patch.kind = PatchTemplate::Kind::Circular;
  g.patch.rings = 3;
  const ModelConfig back = config_from_json(config_to_json(g));
  CHECK(std::get<GcnnConfig>(back) == g);
  PcnnConfig p;
  p.width = 112;
  p.filters = 32;
  CHECK(std::get<PcnnConfig>(config_from_json(config_to_json(p))) == p);
}

TEST_CASE("checkpoint round trip within float32 quantization") {
  for (Model m : {verify::gradient_gcnn(7), verify::gradient_pcnn(7)}) {
    const Tensor x = rnd(m.input_shape(), 4, 11);
    train_steps(m, x, {1, 0, 0, 1}, 3);
    m.freeze_prefix(2);
    const std::string bytes = checkpoint_bytes(m);
    CHECK(bytes.substr(0, 4) == "GCNN");
    std::istringstream is(bytes);
    Model back = load_checkpoint(is);
    CHECK(back.frozen_count() == 2);
    CHECK(back.describe().size() == m.describe().size());
    CHECK(max_abs_diff(back.logits(x, Mode::Eval), m.logits(x, Mode::Eval)) < 1e-5);
    // Saving again is a fixed point.
    CHECK(checkpoint_bytes(back) == bytes);
  }
}

TEST_CASE("corrupted checkpoints are rejected") {
  const Model m = verify::gradient_gcnn(8);
  const std::string good = checkpoint_bytes(m);
  auto load = [](const std::string& s) {
    std::istringstream is(s);
    return load_checkpoint(is);
  };
  CHECK_NOTHROW(load(good));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, good.size() / 2, good.size() - 1})
    CHECK_THROWS_AS(load(good.substr(0, cut)), FormatError);

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(load(magic), FormatError);
  std::string version = good;
  version[4] = 9;
  CHECK_THROWS_AS(load(version), FormatError);
  for (std::size_t at : {good.size() - 40, good.size() - 2, std::size_t{20}}) {
    std::string flip = good;
    flip[at] = static_cast<char>(flip[at] ^ 0x5A);
    CHECK_THROWS_AS(load(flip), FormatError);
  }
  CHECK_THROWS_AS(load(good + "x"), FormatError);
}

TEST_CASE("checkpoint of a suffix model is refused") {
  const Model m = verify::gradient_gcnn(9);
  std::ostringstream os;
  CHECK_THROWS_AS(save_checkpoint(m.suffix(m.head_start()), os), ConfigError);
}
