// pcsg: collect expert data, train, evaluate, attack and score.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pcsg/binio.hpp"
#include "pcsg/kvfile.hpp"
#include "pcsg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pcsg;

namespace {

enum Exit : int { kOk = 0, kUnexpected = 1, kUsage = 2, kConfig = 3, kData = 4, kNumeric = 5 };

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve(const Common& c) {
  return c.config.empty() ? RunConfig{} : load_run_config(c.config);
}

fs::path prepare_out(const Common& c, const RunConfig& cfg) {
  const fs::path out = c.out;
  fs::create_directories(out);
  save_run_config(out / "config.run", cfg);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw DataError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

model::Model load_model(const RunConfig& cfg, const std::string& checkpoint) {
  if (!fs::exists(checkpoint)) throw DataError("checkpoint not found: " + checkpoint);
  auto m = pipeline::make_model(cfg);
  ad::load_checkpoint(checkpoint, m.params());
  return m;
}

std::vector<data::Episode> load_episodes(const std::string& dir) {
  if (dir.empty()) throw ConfigError("config field episodes: no episode directory given (set it or pass --episodes)");
  if (!fs::is_directory(dir)) throw DataError("episode directory not found: " + dir);
  auto eps = data::read_episode_dir(dir);
  if (eps.empty()) throw DataError("no .pcsg episode files in " + dir);
  return eps;
}

int cmd_collect(const Common& c) {
  RunConfig cfg = resolve(c);
  if (c.seed) cfg.data_seed_base = *c.seed;
  const fs::path out = prepare_out(c, cfg);
  const auto pack = pipeline::load_pack(cfg);
  const auto runs = pipeline::collect(cfg, pack, cfg.data_seed_base, cfg.data_seeds);
  fs::create_directories(out / "episodes");

  std::ostringstream report;
  std::size_t kept = 0, rejected = 0, frames = 0;
  for (const auto& r : runs) {
    const auto counts = metrics::count_events(r.events);
    report << "episode scenario=" << r.episode.scenario << " seed=" << r.episode.seed
           << " frames=" << r.episode.frames.size() << " completion=" << format_double(r.completion)
           << " red=" << counts.n_red << " stop=" << counts.n_stop
           << " status=" << (r.episode.rejected ? "rejected" : "kept") << '\n';
    if (r.episode.rejected) {
      ++rejected;
      continue;
    }
    ++kept;
    frames += r.episode.frames.size();
    data::write_episode(out / "episodes" / (r.episode.scenario + "_s" + std::to_string(r.episode.seed) + ".pcsg"),
                        r.episode);
  }
  report << "kept=" << kept << " rejected=" << rejected << " frames=" << frames << '\n';
  write_text(out / "collect_report.txt", report.str());
  std::cout << "kept=" << kept << " rejected=" << rejected << " frames=" << frames << '\n';
  return kOk;
}

int cmd_train(const Common& c, const std::string& episodes_flag) {
  RunConfig cfg = resolve(c);
  if (c.seed) cfg.train.seed = *c.seed;
  if (!episodes_flag.empty()) cfg.episodes = episodes_flag;
  const fs::path out = prepare_out(c, cfg);
  const auto eps = load_episodes(cfg.episodes);
  auto m = pipeline::make_model(cfg);
  std::ofstream log(out / "train_log.txt");
  const auto summaries = train::fit(m, eps, cfg.train, &log);
  ad::save_checkpoint(out / "model.ckpt", m.params());
  for (const auto& s : summaries) {
    std::cout << "epoch=" << s.epoch << " steps=" << s.steps << " mean_total=" << format_double(s.mean_total) << '\n';
  }
  return kOk;
}

int report_eval(const fs::path& out, const eval::EvalReport& rep) {
  const std::string text = rep.format();
  write_text(out / "report.txt", text);
  std::cout << text;
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint) {
  RunConfig cfg = resolve(c);
  if (c.seed) cfg.eval_seeds = {*c.seed};
  const fs::path out = prepare_out(c, cfg);
  const auto m = load_model(cfg, checkpoint);
  const auto rep = eval::evaluate(m, pipeline::load_pack(cfg), cfg.eval_seeds, pipeline::eval_options(cfg), cfg.workers);
  return report_eval(out, rep);
}

int cmd_attack(const Common& c, const std::string& kind, const std::string& checkpoint,
               std::optional<double> epsilon, const std::string& pattern_file) {
  RunConfig cfg = resolve(c);
  if (c.seed) cfg.eval_seeds = {*c.seed};
  if (epsilon) {
    if (!(*epsilon >= 0.0 && *epsilon <= 1.0)) throw ConfigError("config field attack.epsilon: must lie in [0, 1]");
    cfg.epsilon = *epsilon;
  }
  const fs::path out = prepare_out(c, cfg);
  const auto m = load_model(cfg, checkpoint);
  const auto pack = pipeline::load_pack(cfg);
  auto opt = pipeline::eval_options(cfg);

  if (kind == "fgsm") {
    opt.attack = eval::AttackKind::kFgsm;
  } else {
    opt.attack = eval::AttackKind::kDot;
    if (!pattern_file.empty()) {
      opt.pattern = attacks::load_pattern(pattern_file);
    } else {
      // Held-out attack set: one expert episode per scenario at the attack seed.
      const auto eps = pipeline::kept_episodes(pipeline::collect(cfg, pack, cfg.attack_data_seed, 1));
      std::vector<const data::Frame*> frames;
      for (const auto& e : eps)
        for (const auto& f : e.frames) frames.push_back(&f);
      const auto res = attacks::dot_attack_train(m, frames, attacks::default_pattern(cfg.dot.seed, cfg.dot_radius), cfg.dot);
      std::cerr << "dot attack: initial_loss=" << format_double(res.initial_loss)
                << " best_loss=" << format_double(res.best_loss) << " steps=" << res.steps_run
                << (res.diverged ? " diverged" : "") << '\n';
      opt.pattern = res.pattern;
    }
    attacks::save_pattern(out / "pattern.pdot", opt.pattern);
  }
  const auto rep = eval::evaluate(m, pack, cfg.eval_seeds, opt, cfg.workers);
  return report_eval(out, rep);
}

std::string pm(const eval::Aggregate& a) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << a.mean << " +- " << a.std;
  return os.str();
}

int cmd_score(const std::vector<std::string>& files) {
  std::vector<eval::EvalReport> reports;
  for (const auto& f : files) reports.push_back(eval::parse_report(read_text(f)));
  std::size_t width = 6;
  for (const auto& f : files) width = std::max(width, f.size());
  std::cout << std::left << std::setw(static_cast<int>(width)) << "report"
            << "  Driving score    Route compl.     Infrac. score\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& r = reports[i];
    std::ostringstream is;
    is << std::fixed << std::setprecision(4) << r.is.mean << " +- " << r.is.std;
    std::cout << std::left << std::setw(static_cast<int>(width)) << files[i] << "  " << std::setw(17) << pm(r.ds)
              << std::setw(17) << pm(r.rc) << is.str() << '\n';
  }
  return kOk;
}

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--config", c.config, "Run config file (key = value)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Seed override");
  auto* o = sub->add_option("--out", c.out, "Output run directory");
  if (needs_out) o->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalty-constrained driving policy pipeline"};
  app.require_subcommand(1);

  Common collect, train, evaluate, attack;
  std::string episodes, eval_ckpt, attack_ckpt, pattern;
  std::string attack_kind;
  std::optional<double> epsilon;
  std::vector<std::string> score_files;

  auto* c_collect = app.add_subcommand("collect", "Drive the expert over the scenario pack and save episodes");
  add_common(c_collect, collect);
  auto* c_train = app.add_subcommand("train", "Train a model on saved episodes");
  add_common(c_train, train);
  c_train->add_option("--episodes", episodes, "Episode directory (overrides the config)");
  auto* c_eval = app.add_subcommand("eval", "Closed-loop evaluation of a checkpoint");
  add_common(c_eval, evaluate);
  c_eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  auto* c_attack = app.add_subcommand("attack", "Closed-loop evaluation under a camera attack");
  add_common(c_attack, attack);
  c_attack->add_option("kind", attack_kind, "fgsm or dot")->required()->check(CLI::IsMember({"fgsm", "dot"}));
  c_attack->add_option("--checkpoint", attack_ckpt, "Model checkpoint")->required();
  c_attack->add_option("--epsilon", epsilon, "FGSM step size");
  c_attack->add_option("--pattern", pattern, "Use a saved dot pattern instead of training one")
      ->check(CLI::ExistingFile);
  auto* c_score = app.add_subcommand("score", "Aggregate table of evaluation reports");
  c_score->add_option("reports", score_files, "Report files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_collect) return cmd_collect(collect);
    if (*c_train) return cmd_train(train, episodes);
    if (*c_eval) return cmd_eval(evaluate, eval_ckpt);
    if (*c_attack) return cmd_attack(attack, attack_kind, attack_ckpt, epsilon, pattern);
    if (*c_score) return cmd_score(score_files);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const losses::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const binio::FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kUsage;
}
