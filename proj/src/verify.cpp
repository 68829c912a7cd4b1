#include "gcnn/verify.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "gcnn/error.hpp"
#include "gcnn/kernels.hpp"

namespace gcnn::verify {

namespace {

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const char* role_name(ParamRole r) {
  switch (r) {
    case ParamRole::Weights: return "weights";
    case ParamRole::Bias: return "bias";
    case ParamRole::Scale: return "scale";
    case ParamRole::Shift: return "shift";
    case ParamRole::RunningMean: return "running_mean";
    case ParamRole::RunningVar: return "running_var";
  }
  return "?";
}

Tensor random_tensor(const Shape& dims, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(dims);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradientCheck gradient_check(Model& model, const Tensor& batch, std::span<const int> labels, double h) {
  auto loss_at = [&] { return kernels::softmax_cross_entropy(model.logits(batch, Mode::Train), labels).loss; };

  model.zero_grads();
  const auto base = kernels::softmax_cross_entropy(model.logits(batch, Mode::Train), labels);
  model.backward(base.grad_logits);

  GradientCheck report;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    Layer& layer = model.layer(i);
    if (layer.frozen) continue;
    for (ParamView& p : layer.params()) {
      if (!p.trainable()) continue;
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double saved = p.value[k];
        p.value[k] = saved + h;
        const double up = loss_at();
        p.value[k] = saved - h;
        const double down = loss_at();
        p.value[k] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double err = relative_error(p.grad[k], numeric);
        ++report.checked;
        if (report.worst.empty() || err > report.max_relative_error) {
          report.max_relative_error = err;
          report.worst = layer.name() + " / " + role_name(p.role) + " / " + std::to_string(k) + " (analytic " +
                         fmt(p.grad[k], 10) + ", numeric " + fmt(numeric, 10) + ")";
        }
      }
    }
  }
  return report;
}

// ---- geometry -----------------------------------------------------------------

std::vector<CheckResult> geometry_suite() {
  std::vector<CheckResult> out;
  const auto t0 = std::chrono::steady_clock::now();
  const IcosphereHierarchy h = IcosphereHierarchy::build(6);
  const double build_s = seconds_since(t0);

  for (int k = 0; k <= 6; ++k) {
    const IcosphereLevel& lvl = h.level(k);
    const auto expected = static_cast<std::size_t>(10 * (std::int64_t{1} << (2 * k)) + 2);
    std::size_t pentagons = 0;
    for (std::size_t n = 0; n < lvl.node_count(); ++n) pentagons += lvl.degree(static_cast<NodeIndex>(n)) == 5;
    const long euler = static_cast<long>(lvl.node_count()) - static_cast<long>(lvl.edge_count()) +
                       static_cast<long>(lvl.faces.size());
    CheckResult r{1, "geometry", "level " + std::to_string(k) + " nodes/degree/euler", false, {}};
    r.passed = lvl.node_count() == expected && pentagons == 12 && euler == 2;
    r.detail = "nodes " + std::to_string(lvl.node_count()) + " (expected " + std::to_string(expected) +
               "), degree-5 nodes " + std::to_string(pentagons) + ", V-E+F " + std::to_string(euler);
    out.push_back(r);
  }
  out.push_back({1, "geometry", "level 6 build time < 10 s", build_s < 10.0, fmt(build_s, 3) + " s"});

  {
    const PoolingGroups& g = h.pooling_groups(5);
    std::size_t six = 0, sum = 0;
    bool sizes_ok = true;
    for (const auto& grp : g) {
      sizes_ok = sizes_ok && (grp.size() == 6 || grp.size() == 7);
      six += grp.size() == 6;
      sum += grp.size();
    }
    const std::size_t want_sum = 10242 + 2 * (40962 - 10242);
    CheckResult r{2, "geometry", "pooling groups 6 -> 5", false, {}};
    r.passed = g.size() == 10242 && sizes_ok && six == 12 && sum == want_sum;
    r.detail = "groups " + std::to_string(g.size()) + ", size-6 groups " + std::to_string(six) + ", sizes sum " +
               std::to_string(sum) + " (expected " + std::to_string(want_sum) + ")";
    out.push_back(r);
  }

  std::mt19937_64 rng(11);
  for (int coarse : {2, 5}) {
    const PoolingGroups& g = h.pooling_groups(coarse);
    const std::size_t fine = h.level(coarse + 1).node_count();
    const std::size_t nc = h.level(coarse).node_count();
    const Tensor x = random_tensor({2, fine, 3}, rng);
    const Tensor y = random_tensor({2, nc, 3}, rng);
    const double lhs = inner(kernels::mesh_mean_pool_forward(x, g), y);
    const double rhs = inner(x, kernels::mesh_mean_pool_backward(y, g, fine));
    const double gap = std::abs(lhs - rhs);
    const double tol = 1e-12 * std::max(1.0, std::abs(lhs));
    out.push_back({5, "geometry", "pool adjoint " + std::to_string(coarse + 1) + " -> " + std::to_string(coarse),
                   gap <= tol, "<Px,y> " + fmt(lhs, 17) + ", <x,P'y> " + fmt(rhs, 17) + ", gap " + fmt(gap, 3)});
  }
  return out;
}

// ---- gradients --------------------------------------------------------------------

Model gradient_gcnn(std::uint64_t seed) {
  static const auto hierarchy = std::make_shared<const IcosphereHierarchy>(IcosphereHierarchy::build(2));
  GcnnConfig c;
  c.input_level = 2;
  c.blocks = 2;
  c.channels = 2;
  c.filters = 4;
  c.hidden = 6;
  c.classes = 2;
  c.patch.sx = 3;
  c.patch.sy = 3;
  c.seed = seed;
  return build_gcnn(hierarchy, c);
}

Model gradient_pcnn(std::uint64_t seed) {
  PcnnConfig c;
  c.width = 16;
  c.height = 16;
  c.channels = 2;
  c.filters = 4;
  c.hidden = 6;
  c.classes = 2;
  c.conv1_kernel = 3;
  c.conv1_stride = 1;
  c.conv1_pad = 1;
  c.seed = seed;
  return build_pcnn(c);
}

std::vector<CheckResult> gradient_suite() {
  std::vector<CheckResult> out;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(5);
  const std::vector<int> labels{0, 1, 1, 0};
  auto run = [&](Model m, const std::string& label) {
    Shape dims{labels.size()};
    dims.insert(dims.end(), m.input_shape().begin(), m.input_shape().end());
    const Tensor x = random_tensor(dims, rng);
    const GradientCheck g = gradient_check(m, x, labels);
    out.push_back({4, "gradients", label + " max relative error < 1e-4", g.max_relative_error < 1e-4,
                   fmt(g.max_relative_error, 3) + " over " + std::to_string(g.checked) + " values; worst " + g.worst});
  };
  run(gradient_gcnn(), "gCNN level 2 (162 -> 42 -> 12 nodes)");
  run(gradient_pcnn(), "pCNN 16x16");
  const double s = seconds_since(t0);
  out.push_back({4, "gradients", "gradient suite time < 60 s", s < 60.0, fmt(s, 3) + " s"});
  return out;
}

// ---- parameters and shapes --------------------------------------------------------

std::vector<CheckResult> params_suite() {
  std::vector<CheckResult> out;
  auto hierarchy = std::make_shared<const IcosphereHierarchy>(IcosphereHierarchy::build(6));
  const Model g = build_gcnn(hierarchy, GcnnConfig{});
  const Model p = build_pcnn(PcnnConfig{});

  auto audit_checks = [&](const Model& m, const std::string& arch) {
    const AuditResult a = audit_against_table(m);
    for (const AuditLine& l : a.lines) {
      std::string detail = std::to_string(l.actual_bytes) + " B vs table " + l.expectation.published + " (" +
                           std::to_string(l.expectation.expected_bytes) + " B)";
      if (!l.expectation.enforced) detail += "; table row inconsistent, not enforced";
      out.push_back({3, "params", arch + " row " + std::to_string(l.expectation.row) + " " + l.expectation.name,
                     l.matches || !l.expectation.enforced, detail});
    }
    const double mib = static_cast<double>(a.table_total_bytes) / (1024.0 * 1024.0);
    out.push_back({3, "params",
                   arch + " total within " + fmt(100 * a.total_tolerance, 3) + "% of " + fmt(a.published_total_mib) + " MB",
                   a.total_ok,
                   std::to_string(a.table_total_bytes) + " B = " + fmt(mib, 5) + " MB (deviation " +
                       fmt(100.0 * (mib - a.published_total_mib) / a.published_total_mib, 4) + "%)"});
  };
  audit_checks(g, "gCNN");
  audit_checks(p, "pCNN");

  auto chain_check = [&](const Model& m, const std::string& arch, const std::vector<Shape>& expected) {
    const auto rows = m.describe();
    bool ok = rows.size() == expected.size();
    std::string detail = std::to_string(rows.size()) + " rows";
    for (std::size_t i = 0; ok && i < rows.size(); ++i)
      if (rows[i].output != expected[i]) {
        ok = false;
        detail = "row " + std::to_string(i + 1) + " " + rows[i].name + " outputs " + shape_string(rows[i].output) +
                 ", table " + shape_string(expected[i]);
      }
    if (ok) {
      detail += ":";
      for (const auto& r : rows)
        if (r.type == LayerType::MeshPool || r.type == LayerType::ImagePool || r.row == 1)
          detail += " " + shape_string(r.output);
    }
    out.push_back({6, "params", arch + " shape chain matches the table", ok, detail});
  };
  std::vector<Shape> gchain;
  const std::size_t nodes[] = {40962, 10242, 2562, 642, 162, 42};
  for (int b = 0; b < 5; ++b) {
    for (int r = 0; r < 3; ++r) gchain.push_back({nodes[b], 36});
    gchain.push_back({nodes[b + 1], 36});
  }
  for (Shape s : {Shape{50}, Shape{50}, Shape{50}, Shape{2}, Shape{2}}) gchain.push_back(s);
  chain_check(g, "gCNN", gchain);

  const std::vector<Shape> pchain{{54, 54, 64}, {54, 54, 64}, {54, 54, 64}, {27, 27, 64}, {27, 27, 64},
                                  {27, 27, 64}, {27, 27, 64}, {13, 13, 64}, {13, 13, 64}, {13, 13, 64},
                                  {13, 13, 64}, {13, 13, 64}, {13, 13, 64}, {13, 13, 64}, {6, 6, 64},
                                  {100},        {100},        {2},          {2}};
  chain_check(p, "pCNN", pchain);
  return out;
}

std::vector<CheckResult> run_suite(const std::string& name) {
  if (name == "geometry") return geometry_suite();
  if (name == "gradients") return gradient_suite();
  if (name == "params") return params_suite();
  if (name == "all") {
    auto all = geometry_suite();
    for (auto* suite : {&gradient_suite, &params_suite}) {
      auto more = suite();
      all.insert(all.end(), more.begin(), more.end());
    }
    return all;
  }
  throw ConfigError("unknown verification suite '" + name + "' (geometry, gradients, params, all)");
}

}  // namespace gcnn::verify
