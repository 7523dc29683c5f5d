#include "pcsg/evaluate.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pcsg/kvfile.hpp"

namespace pcsg::eval {

using sim::SimState;

std::array<Waypoint, data::kWaypoints> expert_waypoints(const SimState& state, const sim::Route& route,
                                                       const expert::ExpertConfig& cfg,
                                                       const expert::ExpertMemory& memory, double dt) {
  SimState s = state;
  expert::ExpertMemory m = memory;
  std::array<Waypoint, data::kWaypoints> out{};
  for (std::size_t k = 0; k < data::kWaypoints; ++k) {
    const Controls c = expert::expert_action(s, route, cfg, m);
    s = sim::step(s, c, dt).state;
    expert::update_progress(s, route);
    out[k] = world_to_ego(s.ego.pose.position(), state.ego.pose);
  }
  return out;
}

RouteRun run_route(const model::Model& model, const sim::ScenarioConfig& sc, std::uint64_t seed,
                   const EvalOptions& opt) {
  RouteRun run;
  run.seed = seed;
  run.result.route = sc.name;

  SimState state = sim::initial_state(sc, seed);
  expert::update_progress(state, sc.route);
  control::PidState pid;
  expert::ExpertMemory label_memory;
  control::PidParams pid_params = opt.pid;
  pid_params.dt = sc.dt;

  const auto max_steps = static_cast<std::size_t>(std::ceil(sc.time_limit / sc.dt));
  while (run.steps < max_steps && !expert::route_finished(state, sc.route)) {
    data::Frame frame = expert::observe(state, sc.route, opt.observe);
    if (opt.attack == AttackKind::kFgsm) {
      frame.waypoints = expert_waypoints(state, sc.route, opt.labeler, label_memory, sc.dt);
      frame.camera = attacks::fgsm(model, frame, opt.epsilon, opt.weights).camera;
      // Keep the labeler's stop-sign bookkeeping in step with the episode.
      (void)expert::expert_action(state, sc.route, opt.labeler, label_memory);
    } else if (opt.attack == AttackKind::kDot) {
      frame.camera = attacks::apply_dots(frame.camera, opt.pattern);
    }

    std::vector<Waypoint> wps;
    {
      ad::Tape tape;
      const auto p = model.params().bind_frozen(tape);
      const std::vector<const data::Frame*> frames{&frame};
      const auto out = model.forward(p, model::make_inputs(tape, frames), model::Mode::kEval);
      const auto& w = out.waypoints.value();
      for (std::size_t t = 0; t < w.dim(1); ++t) wps.push_back({w[t * 2], w[t * 2 + 1]});
    }
    const auto ctl = control::pid_control(wps, state.ego.speed, pid, pid_params);
    pid = ctl.state;
    auto r = sim::step(state, ctl.controls, sc.dt);
    state = std::move(r.state);
    expert::update_progress(state, sc.route);
    run.events.insert(run.events.end(), r.events.begin(), r.events.end());
    ++run.steps;
  }
  run.result.completion = sim::route_progress(state, sc.route);
  run.result.counts = metrics::count_events(run.events);
  return run;
}

namespace {

Aggregate mean_std(const std::vector<double>& v) {
  Aggregate a;
  if (v.empty()) return a;
  for (double x : v) a.mean += x;
  a.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return a;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace

void aggregate(EvalReport& report) {
  std::map<std::uint64_t, std::vector<metrics::RouteResult>> by_seed;
  report.totals = {};
  for (const auto& r : report.runs) {
    by_seed[r.seed].push_back(r.result);
    report.totals += r.result.counts;
  }
  std::vector<double> ds, rc, is;
  report.seeds.clear();
  for (const auto& [seed, results] : by_seed) {
    report.seeds.push_back(seed);
    ds.push_back(metrics::driving_score(results));
    rc.push_back(metrics::route_completion(results));
    is.push_back(metrics::mean_infraction_score(results));
  }
  report.ds = mean_std(ds);
  report.rc = mean_std(rc);
  report.is = mean_std(is);
}

EvalReport evaluate(const model::Model& model, const std::vector<sim::ScenarioConfig>& pack,
                    const std::vector<std::uint64_t>& seeds, const EvalOptions& opt, unsigned workers) {
  if (pack.empty() || seeds.empty()) throw std::invalid_argument("evaluate: empty route pack or seed list");
  EvalReport report;
  const std::size_t jobs = pack.size() * seeds.size();
  report.runs.resize(jobs);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      try {
        report.runs[j] = run_route(model, pack[j % pack.size()], seeds[j / pack.size()], opt);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  aggregate(report);
  return report;
}

std::string EvalReport::format() const {
  std::ostringstream os;
  for (const auto& r : runs) {
    const auto& c = r.result.counts;
    os << "route seed=" << r.seed << " name=" << r.result.route << " completion=" << format_double(r.result.completion)
       << " ped=" << c.n_ped << " veh=" << c.n_veh << " stat=" << c.n_stat << " red=" << c.n_red
       << " stop=" << c.n_stop << " is=" << format_double(metrics::infraction_score(c)) << " steps=" << r.steps << '\n';
  }
  os << "aggregate seeds=" << seeds.size() << " routes=" << runs.size() << '\n';
  os << "driving_score " << fixed(ds.mean, 2) << " +- " << fixed(ds.std, 2) << '\n';
  os << "route_completion " << fixed(rc.mean, 2) << " +- " << fixed(rc.std, 2) << '\n';
  os << "infraction_score " << fixed(is.mean, 3) << " +- " << fixed(is.std, 3) << " (mean of per-route scores)\n";
  os << "infractions ped=" << totals.n_ped << " veh=" << totals.n_veh << " stat=" << totals.n_stat
     << " red=" << totals.n_red << " stop=" << totals.n_stop << '\n';
  return os.str();
}

EvalReport parse_report(const std::string& text) {
  EvalReport report;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto words = split_ws(line);
    if (words.empty() || words[0] != "route") continue;
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < words.size(); ++i) {
      const auto eq = words[i].find('=');
      if (eq == std::string::npos) throw ConfigError("report line " + std::to_string(lineno) + ": expected key=value");
      kv[words[i].substr(0, eq)] = words[i].substr(eq + 1);
    }
    auto need = [&](const char* key) -> const std::string& {
      const auto it = kv.find(key);
      if (it == kv.end()) throw ConfigError("report line " + std::to_string(lineno) + ": missing field " + key);
      return it->second;
    };
    auto count = [&](const char* key) {
      const long long v = parse_int(need(key), key);
      if (v < 0) throw ConfigError(std::string("negative infraction count for ") + key);
      return static_cast<unsigned>(v);
    };
    RouteRun r;
    r.seed = static_cast<std::uint64_t>(parse_int(need("seed"), "seed"));
    r.result.route = need("name");
    r.result.completion = parse_double(need("completion"), "completion");
    if (!(r.result.completion >= 0.0 && r.result.completion <= 1.0))
      throw ConfigError("report line " + std::to_string(lineno) + ": completion outside [0, 1]");
    r.result.counts = {count("ped"), count("veh"), count("stat"), count("red"), count("stop")};
    if (kv.count("steps")) r.steps = static_cast<std::size_t>(parse_int(kv["steps"], "steps"));
    report.runs.push_back(std::move(r));
  }
  if (report.runs.empty()) throw ConfigError("report contains no route records");
  aggregate(report);
  return report;
}

}  // namespace pcsg::eval
