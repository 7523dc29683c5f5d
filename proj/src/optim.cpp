#include "pcsg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pcsg/binio.hpp"

namespace pcsg::ad {

namespace {
constexpr binio::Magic kCheckpointMagic{'P', 'C', 'K', 'P'};
constexpr std::uint16_t kCheckpointVersion = 1;

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape t;
  return f(t, t.constant(x)).item();
}
}  // namespace

std::size_t ParameterStore::add(std::string name, Tensor init) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw std::invalid_argument("duplicate parameter name " + name);
  }
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(init));
  return tensors_.size() - 1;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::out_of_range("no parameter named " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::vector<Var> ParameterStore::bind(Tape& tape) const {
  std::vector<Var> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) out.push_back(tape.leaf(t));
  return out;
}

std::vector<Var> ParameterStore::bind_frozen(Tape& tape) const {
  std::vector<Var> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) out.push_back(tape.constant(t));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params) {
  binio::Writer w;
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.str(params.name(i));
    const Tensor& t = params[i];
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.f64s(t.data());
  }
  binio::write_container(path, kCheckpointMagic, kCheckpointVersion, w);
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore& params) {
  const auto payload = binio::read_container(path, kCheckpointMagic, kCheckpointVersion);
  binio::Reader r(payload);
  const std::uint32_t n = r.u32();
  if (n != params.size()) {
    throw binio::FormatError(binio::FormatErrorKind::kMalformed,
                             "checkpoint holds " + std::to_string(n) + " tensors, model expects " +
                                 std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    if (name != params.name(i)) {
      throw binio::FormatError(binio::FormatErrorKind::kMalformed,
                               "tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                                   params.name(i) + "'");
    }
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u64();
    if (shape != params[i].shape()) {
      throw binio::FormatError(binio::FormatErrorKind::kMalformed,
                               "shape mismatch for " + name + ": " + to_string(shape) + " vs " +
                                   to_string(params[i].shape()));
    }
    r.f64s(params[i].data());
  }
  if (!r.at_end()) throw binio::FormatError(binio::FormatErrorKind::kMalformed, "trailing checkpoint data");
}

void adam_step(ParameterStore& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient count mismatch");
  if (state.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.emplace_back(params[i].shape(), 0.0);
      state.v.emplace_back(params[i].shape(), 0.0);
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      throw ShapeError("adam_step: gradient shape " + to_string(grads[i].shape()) + " for parameter " +
                       params.name(i) + " of shape " + to_string(params[i].shape()));
    }
    auto p = params[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      p[k] -= cfg.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.eps);
    }
  }
}

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  Tape tape;
  Var xv = tape.leaf(x);
  tape.backward(f(tape, xv));
  const Tensor analytic = tape.grad(xv);
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = evaluate(f, probe);
    probe[i] = x[i] - h;
    const double fm = evaluate(f, probe);
    probe[i] = x[i];
    const double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

SampledCheck grad_check_sampled(const ScalarFn& f, const Tensor& x, std::size_t count,
                                std::mt19937_64& rng, double h, double kink_tol) {
  Tape tape;
  Var xv = tape.leaf(x);
  Var loss = f(tape, xv);
  const double f0 = loss.item();
  tape.backward(loss);
  const Tensor analytic = tape.grad(xv);

  SampledCheck out;
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  Tensor probe = x;
  const std::size_t max_tries = count * 20;
  for (std::size_t tries = 0; out.checked < count && tries < max_tries; ++tries) {
    const std::size_t i = pick(rng);
    probe[i] = x[i] + h;
    const double fp = evaluate(f, probe);
    probe[i] = x[i] - h;
    const double fm = evaluate(f, probe);
    probe[i] = x[i];
    const double right = (fp - f0) / h;
    const double left = (f0 - fm) / h;
    const double numeric = (fp - fm) / (2.0 * h);
    // One-sided slopes differ by O(h * f'') on smooth regions; a larger gap
    // means the stencil crosses a kink.
    if (std::abs(right - left) > kink_tol * std::max(1.0, std::abs(numeric))) {
      ++out.skipped_kinks;
      continue;
    }
    ++out.checked;
    out.max_rel_error =
        std::max(out.max_rel_error, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return out;
}

}  // namespace pcsg::ad
