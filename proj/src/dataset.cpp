#include "pcsg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "pcsg/binio.hpp"

namespace pcsg::data {

namespace {

using binio::FormatError;
using binio::FormatErrorKind;

constexpr binio::Magic kMagic{'P', 'C', 'S', 'G'};

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

void put_tensor(binio::Writer& w, const ad::Tensor& t) { w.f64s(t.data()); }

void get_tensor(binio::Reader& r, ad::Tensor& t, const ad::Shape& shape) {
  t = ad::Tensor(shape);
  r.f64s(t.data());
}

void put_seg(binio::Writer& w, const sensors::SemGrid& g) { w.bytes(g.labels); }

void get_seg(binio::Reader& r, sensors::SemGrid& g, std::size_t h, std::size_t wd) {
  g.h = h;
  g.w = wd;
  g.labels.assign(h * wd, 0);
  r.bytes(g.labels);
  for (auto l : g.labels)
    if (l >= sensors::kSemClasses) throw FormatError(FormatErrorKind::kMalformed, "segmentation label out of range");
}

struct Shapes {
  ad::Shape camera{3, 32, 96};
  ad::Shape lidar{2, 64, 64};
  std::size_t fh = 32, fw = 96, th = 64, tw = 64;
};

Shapes shapes_of(const Episode& ep) {
  Shapes s;
  if (ep.frames.empty()) return s;
  const Frame& f = ep.frames.front();
  s.camera = f.camera.grid.shape();
  s.lidar = f.lidar.grid.shape();
  s.fh = f.front_seg.h;
  s.fw = f.front_seg.w;
  s.th = f.td_seg.h;
  s.tw = f.td_seg.w;
  return s;
}

void put_shape(binio::Writer& w, const ad::Shape& s) {
  w.u8(static_cast<std::uint8_t>(s.size()));
  for (auto d : s) w.u32(static_cast<std::uint32_t>(d));
}

ad::Shape get_shape(binio::Reader& r) {
  const std::size_t rank = r.u8();
  if (rank != 3) throw FormatError(FormatErrorKind::kMalformed, "sensor tensors must have rank 3");
  ad::Shape s(rank);
  for (auto& d : s) d = r.u32();
  return s;
}

void put_frame(binio::Writer& w, const Frame& f) {
  put_tensor(w, f.camera.grid);
  put_tensor(w, f.lidar.grid);
  put_seg(w, f.front_seg);
  put_seg(w, f.td_seg);
  w.f64s(f.meas.values);
  w.f64s(f.light_state);
  w.f64(f.stop_sign_flag);
  w.u8(f.is_red ? 1 : 0);
  w.f64(f.y_stop);
  w.f64(f.delta_heading);
  w.f64(f.goal.x);
  w.f64(f.goal.y);
  for (const Waypoint& p : f.waypoints) {
    w.f64(p.x);
    w.f64(p.y);
  }
}

Frame get_frame(binio::Reader& r, const Shapes& s) {
  Frame f;
  get_tensor(r, f.camera.grid, s.camera);
  get_tensor(r, f.lidar.grid, s.lidar);
  get_seg(r, f.front_seg, s.fh, s.fw);
  get_seg(r, f.td_seg, s.th, s.tw);
  r.f64s(f.meas.values);
  r.f64s(f.light_state);
  f.stop_sign_flag = r.f64();
  f.is_red = r.u8() != 0;
  f.y_stop = r.f64();
  f.delta_heading = r.f64();
  f.goal.x = r.f64();
  f.goal.y = r.f64();
  for (Waypoint& p : f.waypoints) {
    p.x = r.f64();
    p.y = r.f64();
  }
  return f;
}

}  // namespace

bool operator==(const Frame& a, const Frame& b) {
  auto bits_equal = [](std::span<const double> x, std::span<const double> y) {
    return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), same_bits);
  };
  if (a.camera.grid.shape() != b.camera.grid.shape() || a.lidar.grid.shape() != b.lidar.grid.shape()) return false;
  return bits_equal(a.camera.grid.data(), b.camera.grid.data()) && bits_equal(a.lidar.grid.data(), b.lidar.grid.data()) &&
         a.front_seg == b.front_seg && a.td_seg == b.td_seg && bits_equal(a.meas.values, b.meas.values) &&
         bits_equal(a.light_state, b.light_state) && same_bits(a.stop_sign_flag, b.stop_sign_flag) &&
         a.is_red == b.is_red && same_bits(a.y_stop, b.y_stop) && same_bits(a.delta_heading, b.delta_heading) &&
         same_bits(a.goal.x, b.goal.x) && same_bits(a.goal.y, b.goal.y) &&
         std::equal(a.waypoints.begin(), a.waypoints.end(), b.waypoints.begin(),
                    [](Waypoint p, Waypoint q) { return same_bits(p.x, q.x) && same_bits(p.y, q.y); });
}

void write_episode(const std::filesystem::path& path, const Episode& ep) {
  const Shapes s = shapes_of(ep);
  binio::Writer w;
  w.str(ep.scenario);
  w.u64(ep.seed);
  w.f64(ep.dt);
  w.u64(ep.expert_hash);
  w.u8(ep.rejected ? 1 : 0);
  put_shape(w, s.camera);
  put_shape(w, s.lidar);
  for (std::size_t d : {s.fh, s.fw, s.th, s.tw}) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(ep.frames.size()));
  for (const Frame& f : ep.frames) {
    if (f.camera.grid.shape() != s.camera || f.lidar.grid.shape() != s.lidar || f.front_seg.h != s.fh ||
        f.front_seg.w != s.fw || f.td_seg.h != s.th || f.td_seg.w != s.tw) {
      throw std::invalid_argument("write_episode: frames with differing shapes");
    }
    binio::Writer rec;
    put_frame(rec, f);
    w.u64(rec.size());
    w.bytes(rec.buffer());
  }
  binio::write_container(path, kMagic, kEpisodeVersion, w);
}

Episode read_episode(const std::filesystem::path& path) {
  const auto payload = binio::read_container(path, kMagic, kEpisodeVersion);
  binio::Reader r(payload);
  Episode ep;
  ep.scenario = r.str();
  ep.seed = r.u64();
  ep.dt = r.f64();
  ep.expert_hash = r.u64();
  ep.rejected = r.u8() != 0;
  Shapes s;
  s.camera = get_shape(r);
  s.lidar = get_shape(r);
  s.fh = r.u32();
  s.fw = r.u32();
  s.th = r.u32();
  s.tw = r.u32();
  const std::uint32_t n = r.u32();
  ep.frames.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint64_t len = r.u64();
    binio::Reader rec = r.sub(len);
    ep.frames.push_back(get_frame(rec, s));
    if (!rec.at_end()) throw FormatError(FormatErrorKind::kMalformed, "frame record has trailing bytes");
  }
  if (!r.at_end()) throw FormatError(FormatErrorKind::kMalformed, "episode payload has trailing bytes");
  return ep;
}

std::vector<Episode> read_episode_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".pcsg") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Episode> out;
  for (const auto& f : files) out.push_back(read_episode(f));
  return out;
}

std::vector<Batch> make_batches(const std::vector<Episode>& episodes, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2 for the contrastive loss");
  std::vector<FrameRef> all;
  for (std::size_t e = 0; e < episodes.size(); ++e)
    for (std::size_t f = 0; f < episodes[e].frames.size(); ++f) all.push_back({e, f});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the order is stable across standard libraries.
  for (std::size_t i = all.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(all[i - 1], all[j]);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start + batch_size <= all.size(); start += batch_size) {
    Batch b;
    for (std::size_t k = start; k < start + batch_size; ++k) {
      b.refs.push_back(all[k]);
      b.frames.push_back(&episodes[all[k].episode].frames[all[k].frame]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::pair<std::vector<Episode>, std::vector<Episode>> split_episodes(std::vector<Episode> episodes,
                                                                     double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const auto n_val = static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(episodes.size())));
  std::pair<std::vector<Episode>, std::vector<Episode>> out;
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < n_val ? out.second : out.first).push_back(std::move(episodes[order[k]]));
  return out;
}

}  // namespace pcsg::data
