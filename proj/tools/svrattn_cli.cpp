// SPDX-License-Identifier: Apache-2.0
//
// svrattn: verification suites, SVR solves, attention evaluation and cost
// sweeps over plain-text matrix files.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "svrattn/attention.hpp"
#include "svrattn/cost.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/io.hpp"
#include "svrattn/multihead.hpp"
#include "svrattn/svr.hpp"
#include "svrattn/verify.hpp"

namespace fs = std::filesystem;
using namespace svrattn;

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kUsage = 2, kNoConvergence = 3 };

FeatureMapSpec parse_fmap(const std::string& name, std::size_t dim) {
  if (name == "identity") return FeatureMapSpec::identity(dim);
  if (name == "elu") return FeatureMapSpec::elu_plus_one(dim);
  if (name.rfind("exp:", 0) == 0) {
    std::size_t t = 0;
    const char* b = name.data() + 4;
    const char* e = name.data() + name.size();
    auto [p, ec] = std::from_chars(b, e, t);
    if (ec == std::errc() && p == e && b != e) return FeatureMapSpec::exp_truncated(t, dim);
  }
  throw ParameterError("--fmap must be identity, elu or exp:T, got `" + name + "`");
}

void require_cols(const Matrix& a, const char* fa, const Matrix& b, const char* fb) {
  if (a.cols() != b.cols()) {
    throw ShapeError(std::string(fa) + " has " + std::to_string(a.cols()) + " columns but " + fb + " has " +
                     std::to_string(b.cols()));
  }
}

void require_rows(const Matrix& a, const char* fa, const Matrix& b, const char* fb) {
  if (a.rows() != b.rows()) {
    throw ShapeError(std::string(fa) + " has " + std::to_string(a.rows()) + " rows but " + fb + " has " +
                     std::to_string(b.rows()));
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
  } else {
    write_file_atomic(path, text);
  }
}

// ------------------------------------------------------------------ verify

struct VerifyArgs {
  std::uint64_t seed = 7;
  std::string out = "verify_report.csv";
  std::string suite = "all";
};

int run_verify(const VerifyArgs& a) {
  std::vector<CheckReport> reports;
  if (a.suite == "all") {
    reports = run_all(a.seed);
  } else if (a.suite == "gradcheck") {
    for (GradVariant v : all_grad_variants()) reports.push_back(gradcheck(v, 10, a.seed));
  } else if (a.suite == "kernel") {
    const std::size_t degrees[] = {0, 1, 2, 3, 4, 6, 8, 10, 12};
    reports = kernel_approx_check(degrees, 1000, a.seed);
  } else if (a.suite == "identity") {
    reports = identity_suite(a.seed, 50);
  } else if (a.suite == "invariant") {
    reports = invariant_suite(a.seed, 100);
  } else if (a.suite == "svr") {
    reports = svr_suite(a.seed, 20);
  } else if (a.suite == "cost") {
    reports = cost_suite();
  }
  std::ostringstream csv;
  write_report_csv(csv, reports);
  write_text(a.out, csv.str());

  std::size_t passed = 0;
  for (const auto& r : reports) {
    if (r.passed) {
      ++passed;
    } else {
      std::cerr << "FAIL " << r.name << " max_abs=" << format_double(r.max_abs_error)
                << " max_rel=" << format_double(r.max_rel_error) << " tol=" << format_double(r.tolerance);
      if (r.first_failing_trial) std::cerr << " first_failing_trial=" << *r.first_failing_trial;
      std::cerr << '\n';
    }
  }
  std::cout << passed << "/" << reports.size() << " checks passed (seed " << a.seed << ")\n";
  return passed == reports.size() ? kOk : kVerifyFailed;
}

// --------------------------------------------------------------------- svr

struct SvrArgs {
  std::string keys, targets;
  std::string fmap = "exp:8";
  std::string normalizer = "softmax";
  double c = 1.0;
  double eps_tube = 0.1;
  bool fit_bias = false;
  std::size_t max_iters = 200000;
  double tol = 1e-8;
  std::string out_v = "v.txt", out_b = "b.txt", out_kkt = "kkt.csv";
};

int run_svr(const SvrArgs& a) {
  const Matrix keys = load_matrix(a.keys);
  const Matrix targets = load_matrix(a.targets);
  require_rows(keys, "--keys", targets, "--targets");
  const Normalizer norm = a.normalizer == "softmax" ? Normalizer::HSoftmax : Normalizer::HOne;
  const SvrProblem p = build_problem(keys, targets, parse_fmap(a.fmap, keys.cols()), norm, a.c, a.eps_tube, a.fit_bias);
  const SvrSolution s = solve_dual(p, a.max_iters, a.tol);
  const KktReport k = kkt_check(p, s);

  save_matrix(s.v, a.out_v);
  save_matrix(Matrix(1, s.b.size(), s.b), a.out_b);
  std::ostringstream csv;
  csv << "check,max_violation\n";
  csv << "box," << format_double(k.box) << '\n';
  csv << "complementarity," << format_double(k.complementarity) << '\n';
  csv << "tube," << format_double(k.tube) << '\n';
  csv << "stationarity," << format_double(k.stationarity) << '\n';
  csv << "bias," << format_double(k.bias) << '\n';
  csv << "value_bound," << format_double(k.value_bound) << '\n';
  csv << "solver_residual," << format_double(s.kkt_residual) << '\n';
  write_text(a.out_kkt, csv.str());
  std::cout << "solved " << keys.rows() << " points, " << targets.cols() << " output dims in " << s.iterations
            << " iterations; worst KKT violation " << format_double(k.worst()) << '\n';
  return kOk;
}

// -------------------------------------------------------------------- attn

struct AttnArgs {
  std::string variant = "softmax";
  std::string q, k, v, x;
  std::string wq, wk, wv;
  std::string mask, kernel, key_kernel, manifest;
  std::string grid;
  double beta = 1.0;
  double eps_bn = kDefaultEpsBn;
  std::string out_h = "h.txt", out_a;
};

std::pair<std::size_t, std::size_t> parse_grid(const std::string& g) {
  const auto x = g.find('x');
  std::size_t h = 0, w = 0;
  if (x != std::string::npos) {
    auto r1 = std::from_chars(g.data(), g.data() + x, h);
    auto r2 = std::from_chars(g.data() + x + 1, g.data() + g.size(), w);
    if (r1.ec == std::errc() && r2.ec == std::errc() && r1.ptr == g.data() + x && r2.ptr == g.data() + g.size() &&
        h > 0 && w > 0)
      return {h, w};
  }
  throw ParameterError("--grid must look like HxW, got `" + g + "`");
}

int run_attn(const AttnArgs& a) {
  auto need = [](const std::string& path, const char* flag) {
    if (path.empty()) throw ParameterError(std::string(flag) + " is required for this variant");
    return load_matrix(path);
  };

  if (a.variant == "heads") {
    const Matrix x = need(a.x, "--x");
    if (a.manifest.empty()) throw ParameterError("--manifest is required for heads");
    const HeadConfig cfg = load_head_config(load_manifest(a.manifest));
    for (std::size_t s = 0; s < cfg.heads.size(); ++s) {
      if (cfg.heads[s].w_q.cols() != x.cols()) {
        throw ShapeError("--x has " + std::to_string(x.cols()) + " columns but wq." + std::to_string(s) + " has " +
                         std::to_string(cfg.heads[s].w_q.cols()));
      }
    }
    save_matrix(scaled_head_attention(x, cfg), a.out_h);
    return kOk;
  }

  if (a.variant == "residual") {
    const Matrix x = need(a.x, "--x");
    FullResidualSpec spec{need(a.wq, "--wq"), need(a.wk, "--wk"), need(a.wv, "--wv")};
    require_cols(x, "--x", spec.w_q, "--wq");
    require_cols(x, "--x", spec.w_k, "--wk");
    require_cols(x, "--x", spec.w_v, "--wv");
    const AttentionOutput out = full_residual_forward(x, spec);
    save_matrix(out.h, a.out_h);
    if (!a.out_a.empty() && out.a) save_matrix(*out.a, a.out_a);
    return kOk;
  }

  const Matrix q = need(a.q, "--q"), k = need(a.k, "--k"), v = need(a.v, "--v");
  require_cols(q, "--q", k, "--k");
  require_rows(k, "--k", v, "--v");

  AttentionSpec spec;
  if (a.variant == "softmax") {
    spec = SoftmaxSpec{};
  } else if (a.variant == "linear-elu" || a.variant.rfind("linear-exp:", 0) == 0) {
    spec = LinearSpec{parse_fmap(a.variant == "linear-elu" ? "elu" : a.variant.substr(7), q.cols())};
  } else if (a.variant == "sparse") {
    const Matrix m = need(a.mask, "--mask");
    if (m.rows() != q.rows() || m.cols() != k.rows()) {
      throw ShapeError("--mask is " + m.shape_str() + " but --q/--k need " + std::to_string(q.rows()) + "x" +
                       std::to_string(k.rows()));
    }
    spec = SparseSpec{Mask::from_matrix(m)};
  } else if (a.variant == "bn") {
    spec = BnSpec{BnMode::FullBN, a.beta, a.eps_bn};
  } else if (a.variant == "bn-recenter") {
    spec = BnSpec{BnMode::RecenterOnly, a.beta, a.eps_bn};
  } else if (a.variant == "conv1d") {
    const Matrix kern = need(a.kernel, "--kernel");
    Conv1DSpec c{std::vector<double>(kern.data().begin(), kern.data().end()), {}};
    if (!a.key_kernel.empty()) {
      const Matrix kk = load_matrix(a.key_kernel);
      c.key_kernel = std::vector<double>(kk.data().begin(), kk.data().end());
    }
    spec = std::move(c);
  } else if (a.variant == "conv2d") {
    if (a.grid.empty()) throw ParameterError("--grid is required for conv2d");
    const auto [gh, gw] = parse_grid(a.grid);
    Conv2DSpec c{need(a.kernel, "--kernel"), {}, gh, gw};
    if (!a.key_kernel.empty()) c.key_kernel = load_matrix(a.key_kernel);
    spec = std::move(c);
  } else {
    throw ParameterError("unknown --variant `" + a.variant + "`");
  }

  const AttentionOutput out = attend(spec, q, k, v);
  save_matrix(out.h, a.out_h);
  if (!a.out_a.empty()) {
    if (!out.a) throw ParameterError("--out-a: variant " + a.variant + " never forms the attention matrix");
    save_matrix(*out.a, a.out_a);
  }
  return kOk;
}

// -------------------------------------------------------------------- cost

struct CostArgs {
  std::vector<std::size_t> scales{1, 2};
  std::vector<std::size_t> baseline;
  std::vector<std::size_t> n{1024, 2048, 4096};
  std::vector<std::size_t> d{64};
  std::string stage = "total";
  bool bn = false;
  std::string out = "-";
};

int run_cost(const CostArgs& a) {
  const std::vector<std::size_t> base = a.baseline.empty() ? std::vector<std::size_t>(a.scales.size(), 1) : a.baseline;
  const auto ha = cost_heads_for_scales(a.scales, a.bn);
  const auto hb = cost_heads_for_scales(base, a.bn);
  const auto rows = ratio_sweep(ha, hb, a.n, a.d, a.stage == "scores" ? CostStage::Scores : CostStage::Total);
  std::ostringstream csv;
  write_ratio_csv(csv, rows);
  write_text(a.out, csv.str());
  return kOk;
}

// --------------------------------------------------------------- head-dist

struct HeadDistArgs {
  std::vector<std::string> files;
  std::vector<std::size_t> scales;
};

int run_head_dist(const HeadDistArgs& a) {
  std::vector<Matrix> mats;
  for (const auto& f : a.files) mats.push_back(load_matrix(f));
  const HeadDistance hd = head_distance(mats, a.scales);
  std::cout << "mean=" << format_double(hd.mean) << " std=" << format_double(hd.std)
            << " raw_mean=" << format_double(hd.raw_mean) << " raw_std=" << format_double(hd.raw_std)
            << " pairs=" << hd.pairs << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"svrattn: SVR and attention verification tools"};
  app.require_subcommand(1);

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "run the verification suites and write a CSV report");
  verify->add_option("--seed", va.seed, "PRNG seed")->capture_default_str();
  verify->add_option("--out", va.out, "report path, - for stdout")->capture_default_str();
  verify->add_option("--suite", va.suite, "which suite to run")
      ->check(CLI::IsMember({"all", "gradcheck", "kernel", "identity", "invariant", "svr", "cost"}))
      ->capture_default_str();

  SvrArgs sa;
  auto* svr = app.add_subcommand("svr", "solve an epsilon-insensitive SVR and write v, b and a KKT report");
  svr->add_option("--keys", sa.keys, "N x D matrix file")->required()->check(CLI::ExistingFile);
  svr->add_option("--targets", sa.targets, "N x D_v matrix file")->required()->check(CLI::ExistingFile);
  svr->add_option("--fmap", sa.fmap, "identity, elu or exp:T")->capture_default_str();
  svr->add_option("--normalizer", sa.normalizer, "softmax or one")
      ->check(CLI::IsMember({"softmax", "one"}))
      ->capture_default_str();
  svr->add_option("--C", sa.c, "box constant")->check(CLI::PositiveNumber)->capture_default_str();
  svr->add_option("--eps-tube", sa.eps_tube, "tube half-width")->check(CLI::NonNegativeNumber)->capture_default_str();
  svr->add_flag("--fit-bias", sa.fit_bias, "fit b instead of fixing it at 0");
  svr->add_option("--max-iters", sa.max_iters)->check(CLI::PositiveNumber)->capture_default_str();
  svr->add_option("--tol", sa.tol)->check(CLI::PositiveNumber)->capture_default_str();
  svr->add_option("--out-v", sa.out_v)->capture_default_str();
  svr->add_option("--out-b", sa.out_b)->capture_default_str();
  svr->add_option("--out-kkt", sa.out_kkt)->capture_default_str();

  AttnArgs aa;
  auto* attn = app.add_subcommand("attn", "evaluate an attention variant over matrix files");
  attn->add_option("--variant", aa.variant,
                   "softmax, linear-elu, linear-exp:T, sparse, bn, bn-recenter, conv1d, conv2d, residual, heads")
      ->capture_default_str();
  for (auto [flag, dest] : {std::pair{"--q", &aa.q}, {"--k", &aa.k}, {"--v", &aa.v}, {"--x", &aa.x}, {"--wq", &aa.wq},
                            {"--wk", &aa.wk}, {"--wv", &aa.wv}, {"--mask", &aa.mask}, {"--kernel", &aa.kernel},
                            {"--key-kernel", &aa.key_kernel}, {"--manifest", &aa.manifest}}) {
    attn->add_option(flag, *dest)->check(CLI::ExistingFile);
  }
  attn->add_option("--grid", aa.grid, "conv2d token grid HxW");
  attn->add_option("--beta", aa.beta, "BN recentering weight")->capture_default_str();
  attn->add_option("--eps-bn", aa.eps_bn)->check(CLI::PositiveNumber)->capture_default_str();
  attn->add_option("--out-h", aa.out_h)->capture_default_str();
  attn->add_option("--out-a", aa.out_a, "also write the attention matrix");

  CostArgs ca;
  auto* cost = app.add_subcommand("cost", "FLOP and memory ratios against an all-scale-1 baseline");
  cost->add_option("--scales", ca.scales, "per-head scales")->delimiter(',')->capture_default_str();
  cost->add_option("--baseline", ca.baseline, "baseline scales (default: all 1)")->delimiter(',');
  cost->add_option("--n", ca.n, "sequence lengths")->delimiter(',')->capture_default_str();
  cost->add_option("--d", ca.d, "model dims")->delimiter(',')->capture_default_str();
  cost->add_option("--stage", ca.stage, "total or scores")
      ->check(CLI::IsMember({"total", "scores"}))
      ->capture_default_str();
  cost->add_flag("--bn", ca.bn, "count BN recentering");
  cost->add_option("--out", ca.out, "CSV path, - for stdout")->capture_default_str();

  HeadDistArgs ha;
  auto* hdist = app.add_subcommand("head-dist", "mean/std pairwise distance between per-head attention matrices");
  hdist->add_option("files", ha.files, "attention matrix files")->required()->check(CLI::ExistingFile);
  hdist->add_option("--scales", ha.scales, "per-head scales")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (verify->parsed()) return run_verify(va);
    if (svr->parsed()) return run_svr(sa);
    if (attn->parsed()) return run_attn(aa);
    if (cost->parsed()) return run_cost(ca);
    if (hdist->parsed()) return run_head_dist(ha);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\nresidual: " << format_double(e.residual()) << '\n';
    return kNoConvergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
