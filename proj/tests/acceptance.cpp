// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "pcsg/kvfile.hpp"
#include "pcsg/losses.hpp"
#include "pcsg/pipeline.hpp"
#include "test_frames.hpp"

namespace fs = std::filesystem;
using namespace pcsg;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  int id = 0;
  bool pass = false;
  std::string detail;
};

std::vector<Outcome> g_outcomes;

void report(int id, bool pass, const std::string& detail) {
  g_outcomes.push_back({id, pass, detail});
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// ---- 1: penalty semantics ---------------------------------------------------

void penalty_semantics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240101);
  std::uniform_real_distribution<double> coord(-4, 12), ystop(-2, 10), heading(-3.5, 3.5), bound(0, 6);
  std::bernoulli_distribution coin(0.5), edge(0.2);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<Waypoint> w(4);
    for (auto& p : w) p = {coord(rng) / 4, coord(rng)};
    losses::PenaltyContext ctx;
    ctx.is_red = coin(rng);
    ctx.y_stop = ystop(rng);
    ctx.is_stop_sign = coin(rng);
    ctx.delta_heading = edge(rng) ? 0.0 : heading(rng);
    ctx.eps_v = bound(rng);
    ctx.v_lb = bound(rng);
    if (edge(rng)) {
      w[1] = {w[0].x, w[0].y + ctx.eps_v * ctx.dt};
      for (auto& p : w) p.y = std::min(p.y, ctx.y_stop);
    }
    const double dx = w[1].x - w[0].x, dy = w[1].y - w[0].y;
    const double v = std::sqrt(dx * dx + dy * dy) / ctx.dt;
    bool behind = true;
    for (const auto& p : w) behind = behind && p.y <= ctx.y_stop;

    const double red = losses::red_light_penalty(w, ctx);
    const double stop = losses::stop_sign_penalty(w, ctx);
    const double curve = losses::curvature_speed_penalty(w, ctx);
    const bool ok = red >= 0 && stop >= 0 && curve >= 0 && (red == 0.0) == (!ctx.is_red || behind) &&
                    (stop == 0.0) == (!ctx.is_stop_sign || v <= ctx.eps_v) &&
                    (curve == 0.0) == (ctx.delta_heading == 0.0 || v <= ctx.v_lb);
    if (!ok) ++violations;
  }
  const double secs = seconds_since(t0);
  report(1, violations == 0 && secs < 5.0,
         "10000 cases, " + std::to_string(violations) + " violations, " + fmt(secs) + " s (limit 5 s)");
}

// ---- 2: gradient oracle through the full model -------------------------------

void gradient_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t kinks = 0, checked = 0;
  std::mt19937_64 pick(77);
  for (int i = 0; i < 20; ++i) {
    const model::Model m({}, 100 + static_cast<std::uint64_t>(i));
    const auto frames = testframes::random_frames(2, 200 + static_cast<std::uint64_t>(i));
    const auto ptrs = testframes::pointers(frames);
    const auto truth = losses::make_targets(ptrs);
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, m.params().size() - 1)(pick);
    auto f = [&](ad::Tape& t, ad::Var x) {
      auto p = m.params().bind_frozen(t);
      p[idx] = x;
      return losses::total_loss(m.forward(p, model::make_inputs(t, ptrs), model::Mode::kEval), truth, {}).total;
    };
    const auto rep = ad::grad_check_sampled(f, m.params()[idx], 1, pick, 1e-5);
    worst = std::max(worst, rep.max_rel_error);
    kinks += rep.skipped_kinks;
    checked += rep.checked;
  }
  const double secs = seconds_since(t0);
  report(2, checked == 20 && worst <= 1e-4 && secs < 120.0,
         std::to_string(checked) + " points, max relative error " + sci(worst) + " (limit 1e-4), " +
             std::to_string(kinks) + " kink draws redrawn, " + fmt(secs) + " s");
}

// ---- 3: metrics oracle ---------------------------------------------------------

void metrics_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<unsigned> n(0, 6);
  std::uniform_real_distribution<double> r(0, 1);
  double worst = 0.0;
  std::vector<metrics::RouteResult> routes;
  double ds_sum = 0.0;
  for (int i = 0; i < 50; ++i) {
    const metrics::InfractionCounts c{n(rng), n(rng), n(rng), n(rng), n(rng)};
    // Brute force: one multiplication per occurrence, in reverse factor order.
    double want = 1.0;
    for (unsigned k = 0; k < c.n_stop; ++k) want *= 0.8;
    for (unsigned k = 0; k < c.n_red; ++k) want *= 0.7;
    for (unsigned k = 0; k < c.n_stat; ++k) want *= 0.65;
    for (unsigned k = 0; k < c.n_veh; ++k) want *= 0.60;
    for (unsigned k = 0; k < c.n_ped; ++k) want *= 0.5;
    worst = std::max(worst, std::abs(metrics::infraction_score(c) - want));
    const double completion = r(rng);
    routes.push_back({"r" + std::to_string(i), completion, c});
    ds_sum += completion * want;
  }
  const double ds_err = std::abs(metrics::driving_score(routes) - 100.0 * ds_sum / 50.0);
  const double single = metrics::infraction_score({.n_red = 1});
  report(3, worst <= 1e-12 && ds_err <= 1e-12 && single == 0.7,
         "50 count vectors, max IS error " + sci(worst) + ", DS error " + sci(ds_err) + ", single red light = " +
             format_double(single));
}

// ---- 4: contrastive / KL suite --------------------------------------------------

void kl_suite() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0, 1);
  double asym = 0.0, self = 0.0, min_distinct = 1e300, min_value = 1e300;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 1 + static_cast<std::size_t>(i) % 8;
    std::vector<double> m1(d), v1(d), m2(d), v2(d);
    for (std::size_t k = 0; k < d; ++k) {
      m1[k] = z(rng);
      m2[k] = z(rng);
      v1[k] = std::exp(z(rng));
      v2[k] = std::exp(z(rng));
    }
    const double a = losses::sym_kl(m1, v1, m2, v2);
    asym = std::max(asym, std::abs(a - losses::sym_kl(m2, v2, m1, v1)));
    self = std::max(self, std::abs(losses::sym_kl(m1, v1, m1, v1)));
    min_value = std::min(min_value, a);
    min_distinct = std::min(min_distinct, a);
  }
  const double hand = losses::sym_kl({0.0}, {1.0}, {1.0}, {1.0});
  const bool pass = asym <= 1e-10 && self <= 1e-10 && min_value >= 0.0 && min_distinct > 1e-10 &&
                    std::abs(hand - 0.5) <= 1e-12;
  report(4, pass,
         "1000 pairs, max asymmetry " + sci(asym) + ", max self-divergence " + sci(self) +
             ", min over distinct pairs " + sci(min_distinct) + ", 1-D case " + format_double(hand));
}

// ---- 5..9: pipeline --------------------------------------------------------------

struct Args {
  fs::path source;
  fs::path cli;
  fs::path work;
};

bool same_except_penalties(const RunConfig& a, const RunConfig& b) {
  RunConfig x = a, y = b;
  for (RunConfig* c : {&x, &y}) {
    c->name.clear();
    c->train.weights.lambda_red = c->train.weights.lambda_stop = c->train.weights.lambda_speed = 0.0;
  }
  return format_run_config(x) == format_run_config(y);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void pipeline_criteria(const Args& args) {
  const auto t_start = Clock::now();
  fs::create_directories(args.work);
  const RunConfig full = load_run_config(args.source / "configs" / "full.run");
  const RunConfig none = load_run_config(args.source / "configs" / "no_penalty.run");
  if (!same_except_penalties(full, none)) throw std::runtime_error("full and no_penalty presets differ beyond penalties");

  auto pack = sim::load_scenario_pack(args.source / "scenarios" / "standard");
  const auto builtin = sim::standard_pack();
  bool pack_matches = pack.size() == builtin.size();
  for (std::size_t i = 0; pack_matches && i < pack.size(); ++i)
    pack_matches = sim::format_scenario(pack[i]) == sim::format_scenario(builtin[i]);
  if (!pack_matches) throw std::runtime_error("scenarios/standard does not match the built-in pack");

  // Collection (also the expert compliance sample).
  const auto runs = pipeline::collect(full, pack, full.data_seed_base, full.data_seeds);
  metrics::InfractionCounts expert_counts;
  double completion = 0.0;
  std::size_t rejected = 0;
  for (const auto& r : runs) {
    expert_counts += metrics::count_events(r.events);
    completion += r.completion;
    rejected += r.episode.rejected ? 1 : 0;
  }
  completion /= static_cast<double>(runs.size());
  const auto episodes = pipeline::kept_episodes(runs);
  std::size_t frame_count = 0;
  for (const auto& e : episodes) frame_count += e.frames.size();
  std::cout << "collected " << episodes.size() << " episodes, " << frame_count << " frames in "
            << fmt(seconds_since(t_start), 1) << " s" << std::endl;

  // 5: identical data, epochs and seeds; only the multipliers differ.
  auto train_one = [&](const RunConfig& cfg, const std::string& tag) {
    const auto t0 = Clock::now();
    auto m = pipeline::make_model(cfg);
    const auto summaries = train::fit(m, episodes, cfg.train);
    ad::save_checkpoint(args.work / (tag + ".ckpt"), m.params());
    std::cout << "trained " << tag << ": " << summaries.size() << " epochs, final mean loss "
              << fmt(summaries.back().mean_total, 4) << ", " << fmt(seconds_since(t0), 1) << " s" << std::endl;
    return m;
  };
  const auto m_none = train_one(none, "no_penalty");
  const auto m_full = train_one(full, "full");
  const auto opt = pipeline::eval_options(full);
  const auto rep_none = eval::evaluate(m_none, pack, full.eval_seeds, opt, full.workers);
  const auto rep_full = eval::evaluate(m_full, pack, full.eval_seeds, opt, full.workers);
  {
    std::ofstream(args.work / "report_no_penalty.txt") << rep_none.format();
    std::ofstream(args.work / "report_full.txt") << rep_full.format();
  }
  const unsigned rules_none = rep_none.totals.n_red + rep_none.totals.n_stop;
  const unsigned rules_full = rep_full.totals.n_red + rep_full.totals.n_stop;
  const double secs5 = seconds_since(t_start);
  report(5, 2 * rules_full <= rules_none && rep_full.ds.mean > rep_none.ds.mean && secs5 <= 1800.0,
         "red+stop " + std::to_string(rules_full) + " (penalty) vs " + std::to_string(rules_none) +
             " (no penalty); DS " + fmt(rep_full.ds.mean, 2) + " +- " + fmt(rep_full.ds.std, 2) + " vs " +
             fmt(rep_none.ds.mean, 2) + " +- " + fmt(rep_none.ds.std, 2) + "; RC " + fmt(rep_full.rc.mean, 2) +
             " vs " + fmt(rep_none.rc.mean, 2) + "; " + fmt(secs5, 0) + " s (limit 1800 s)");

  // 6: camera perturbations never reach the front segmentation.
  {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    std::size_t identical = 0, td_changed = 0, total = 0;
    for (std::size_t e = 0; e < episodes.size() && total < 20; e += 4) {
      const data::Frame& f = episodes[e].frames[episodes[e].frames.size() / 2];
      data::Frame g = f;
      for (double& v : g.camera.grid.data()) v = std::clamp(v + 0.2 * (u(rng) - 0.5), 0.0, 1.0);
      ad::Tape t1, t2;
      const auto p1 = m_full.params().bind_frozen(t1);
      const auto p2 = m_full.params().bind_frozen(t2);
      const auto a = m_full.forward(p1, model::make_inputs(t1, {&f}), model::Mode::kEval);
      const auto b = m_full.forward(p2, model::make_inputs(t2, {&g}), model::Mode::kEval);
      identical += a.front_seg_logits.value() == b.front_seg_logits.value() ? 1 : 0;
      td_changed += a.td_seg_logits.value() != b.td_seg_logits.value() ? 1 : 0;
      ++total;
    }
    report(6, total > 0 && identical == total,
           std::to_string(identical) + "/" + std::to_string(total) +
               " perturbed frames with bit-identical front segmentation (top-down changed on " +
               std::to_string(td_changed) + ")");
  }

  // 7: FGSM bound on 100 frames, then closed-loop degradation.
  {
    std::vector<const data::Frame*> frames;
    for (std::size_t k = 0; frames.size() < 100; ++k) {
      const auto& e = episodes[k % episodes.size()];
      frames.push_back(&e.frames[(k * 7) % e.frames.size()]);
    }
    const double eps = full.epsilon;
    double max_dev = 0.0;
    std::size_t eligible = 0, at_edge = 0;
    for (const auto* f : frames) {
      const auto res = attacks::fgsm(m_full, *f, eps, full.train.weights);
      const auto x = f->camera.grid.data();
      const auto y = res.camera.grid.data();
      const auto g = res.gradient.data();
      for (std::size_t i = 0; i < x.size(); ++i) {
        max_dev = std::max(max_dev, std::abs(y[i] - x[i]));
        const double dir = g[i] > 0 ? 1.0 : -1.0;
        const double pushed = x[i] + dir * eps;
        if (g[i] == 0.0 || pushed < 0.0 || pushed > 1.0) continue;
        ++eligible;
        // On the edge: no double further out stays within eps.
        const double next = std::nextafter(y[i], dir > 0 ? 2.0 : -1.0);
        if (std::abs(y[i] - x[i]) <= eps && std::abs(next - x[i]) > eps) ++at_edge;
      }
    }
    const double frac = eligible ? static_cast<double>(at_edge) / static_cast<double>(eligible) : 0.0;
    auto attacked_opt = opt;
    attacked_opt.attack = eval::AttackKind::kFgsm;
    attacked_opt.epsilon = eps;
    const auto rep_fgsm = eval::evaluate(m_full, pack, full.eval_seeds, attacked_opt, full.workers);
    std::ofstream(args.work / "report_fgsm.txt") << rep_fgsm.format();
    report(7, max_dev <= eps && frac >= 0.99 && rep_fgsm.ds.mean < rep_full.ds.mean,
           "max |x'-x| " + sci(max_dev) + " (eps " + format_double(eps) + "), on the bound at " +
               fmt(100.0 * frac, 2) + "% of " + std::to_string(eligible) + " eligible pixels; DS " +
               fmt(rep_fgsm.ds.mean, 2) + " attacked vs " + fmt(rep_full.ds.mean, 2) + " clean");
  }

  // 8: the eval command twice gives byte-identical reports; episodes roundtrip.
  {
    bool reports_equal = false;
    std::string why;
    if (!args.cli.empty() && fs::exists(args.cli)) {
      std::string a, b;
      for (const char* tag : {"a", "b"}) {
        const fs::path out = args.work / (std::string("eval_") + tag);
        fs::remove_all(out);
        const std::string cmd = "\"" + args.cli.string() + "\" eval --config \"" +
                                (args.source / "configs" / "full.run").string() + "\" --checkpoint \"" +
                                (args.work / "full.ckpt").string() + "\" --seed 0 --out \"" + out.string() +
                                "\" > \"" + (out.string() + ".stdout") + "\"";
        if (std::system(cmd.c_str()) != 0) why = "eval command failed";
        (std::string(tag) == "a" ? a : b) = read_bytes(out / "report.txt");
      }
      reports_equal = why.empty() && !a.empty() && a == b;
      if (why.empty() && !reports_equal) why = "reports differ";
    } else {
      why = "command-line tool not found";
    }
    std::size_t roundtrip = 0;
    bool bytes_stable = true;
    const fs::path dir = args.work / "episodes";
    fs::create_directories(dir);
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      const fs::path p = dir / ("e" + std::to_string(i) + ".pcsg");
      const fs::path q = dir / ("e" + std::to_string(i) + "_again.pcsg");
      data::write_episode(p, episodes[i]);
      const auto back = data::read_episode(p);
      if (back == episodes[i]) ++roundtrip;
      data::write_episode(q, back);
      bytes_stable = bytes_stable && read_bytes(p) == read_bytes(q);
      fs::remove(q);
    }
    report(8, reports_equal && roundtrip == episodes.size() && bytes_stable,
           std::string("eval report twice: ") + (reports_equal ? "byte-identical" : why) + "; " +
               std::to_string(roundtrip) + "/" + std::to_string(episodes.size()) + " episodes roundtrip bit-exactly" +
               (bytes_stable ? "" : ", rewritten bytes differ"));
  }

  // 9: the expert sample collected above.
  report(9, expert_counts.n_red == 0 && expert_counts.n_stop == 0 && completion >= 0.95,
         std::to_string(runs.size()) + " expert runs: red " + std::to_string(expert_counts.n_red) + ", stop " +
             std::to_string(expert_counts.n_stop) + ", mean completion " + fmt(100.0 * completion, 2) + "%, " +
             std::to_string(rejected) + " rejected");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Args args;
  std::string only;
  app.add_option("--source", args.source, "Project source directory")->required();
  app.add_option("--cli", args.cli, "Path of the pcsg command-line tool");
  app.add_option("--work", args.work, "Scratch directory")->required();
  CLI11_PARSE(app, argc, argv);

  const auto t0 = Clock::now();
  try {
    penalty_semantics();
    gradient_oracle();
    metrics_oracle();
    kl_suite();
    pipeline_criteria(args);
  } catch (const std::exception& e) {
    std::cout << "aborted: " << e.what() << std::endl;
    return 2;
  }
  std::size_t passed = 0;
  for (const auto& o : g_outcomes) passed += o.pass ? 1 : 0;
  std::cout << passed << "/" << g_outcomes.size() << " criteria passed in " << fmt(seconds_since(t0), 0) << " s"
            << std::endl;
  return passed == g_outcomes.size() && g_outcomes.size() == 9 ? 0 : 1;
}
