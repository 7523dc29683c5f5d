#include "pcsg/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "pcsg/kvfile.hpp"

namespace pcsg::sim {

namespace {

Vec2 parse_point(const std::string& tok, const std::string& what) {
  const auto comma = tok.find(',');
  if (comma == std::string::npos) throw ConfigError(what + ": expected x,y but got '" + tok + "'");
  return {parse_double(tok.substr(0, comma), what), parse_double(tok.substr(comma + 1), what)};
}

std::string fmt_point(Vec2 p) { return format_double(p.x) + "," + format_double(p.y); }

std::vector<Vec2> parse_points(const std::vector<std::string>& toks, std::size_t from, const std::string& what) {
  std::vector<Vec2> pts;
  for (std::size_t i = from; i < toks.size(); ++i) pts.push_back(parse_point(toks[i], what));
  return pts;
}

void need(const std::vector<std::string>& toks, std::size_t n, const KvEntry& e) {
  if (toks.size() < n) {
    throw ConfigError("line " + std::to_string(e.line) + ": '" + e.key + "' needs at least " + std::to_string(n) +
                      " fields");
  }
}

LightColor parse_color(const std::string& s, const KvEntry& e) {
  if (s == "red") return LightColor::kRed;
  if (s == "yellow") return LightColor::kYellow;
  if (s == "green") return LightColor::kGreen;
  throw ConfigError("line " + std::to_string(e.line) + ": unknown light color '" + s + "'");
}

const char* color_name(LightColor c) {
  switch (c) {
    case LightColor::kRed: return "red";
    case LightColor::kYellow: return "yellow";
    case LightColor::kGreen: return "green";
  }
  return "red";
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  const KvFile kv = KvFile::parse(text, kScenarioHeader);
  ScenarioConfig sc;
  auto world = std::make_shared<World>();
  TownMap& map = world->map;
  sc.name = kv.get_string("name", "unnamed");
  sc.dt = kv.get_double("dt", 0.5);
  sc.time_limit = kv.get_double("time_limit", 120.0);
  sc.spawn_jitter = kv.get_double("spawn_jitter", 0.5);
  sc.randomize_lights = kv.get_bool("randomize_lights", true);
  if (!(sc.dt > 0)) throw ConfigError("dt must be positive");
  if (!(sc.time_limit > 0)) throw ConfigError("time_limit must be positive");

  for (const KvEntry* e : kv.all("lane")) {
    const auto t = split_ws(e->value);
    need(t, 4, *e);
    map.lanes.push_back({static_cast<int>(parse_int(t[0], "lane id")), parse_double(t[1], "lane width"),
                         parse_points(t, 2, "lane")});
  }
  for (const KvEntry* e : kv.all("intersection")) {
    const auto t = split_ws(e->value);
    need(t, 2, *e);
    map.intersections.push_back({parse_point(t[0], "intersection"), parse_double(t[1], "intersection size")});
  }
  for (const KvEntry* e : kv.all("light")) {
    const auto t = split_ws(e->value);
    need(t, 3, *e);
    TrafficLight l;
    l.id = static_cast<int>(parse_int(t[0], "light id"));
    l.phase_offset = parse_double(t[1], "light offset");
    for (std::size_t i = 2; i < t.size(); ++i) {
      const auto colon = t[i].find(':');
      if (colon == std::string::npos) throw ConfigError("line " + std::to_string(e->line) + ": phase must be color:seconds");
      l.schedule.push_back({parse_color(t[i].substr(0, colon), *e), parse_double(t[i].substr(colon + 1), "phase")});
    }
    map.lights.push_back(std::move(l));
  }
  for (const KvEntry* e : kv.all("sign")) {
    const auto t = split_ws(e->value);
    need(t, 3, *e);
    map.signs.push_back({static_cast<int>(parse_int(t[0], "sign id")), parse_point(t[1], "sign"),
                         parse_double(t[2], "sign radius")});
  }
  for (const KvEntry* e : kv.all("stop_line")) {
    const auto t = split_ws(e->value);
    need(t, 5, *e);
    StopLine sl;
    sl.id = static_cast<int>(parse_int(t[0], "stop_line id"));
    sl.position = parse_point(t[1], "stop_line");
    sl.heading = parse_double(t[2], "stop_line heading");
    sl.width = parse_double(t[3], "stop_line width");
    const auto eq = t[4].find('=');
    const std::string kind = eq == std::string::npos ? "" : t[4].substr(0, eq);
    if (kind == "light") sl.control = StopControl::kLight;
    else if (kind == "sign") sl.control = StopControl::kSign;
    else throw ConfigError("line " + std::to_string(e->line) + ": stop_line must reference light=ID or sign=ID");
    sl.control_id = static_cast<int>(parse_int(t[4].substr(eq + 1), "stop_line control"));
    map.stop_lines.push_back(sl);
  }
  for (const KvEntry* e : kv.all("obstacle")) {
    const auto t = split_ws(e->value);
    need(t, 4, *e);
    map.obstacles.push_back({parse_point(t[0], "obstacle"), parse_double(t[1], "obstacle length"),
                             parse_double(t[2], "obstacle width"), parse_double(t[3], "obstacle heading")});
  }
  for (const KvEntry* e : kv.all("npc")) {
    const auto t = split_ws(e->value);
    need(t, 4, *e);
    world->npcs.push_back({parse_double(t[0], "npc speed"), parse_double(t[1], "npc start"),
                           Route(parse_points(t, 2, "npc path"))});
  }
  const auto routes = kv.all("route");
  if (routes.size() != 1) throw ConfigError("scenario needs exactly one 'route' entry");
  auto route_pts = parse_points(split_ws(routes.front()->value), 0, "route");
  if (route_pts.size() < 2) throw ConfigError("route needs at least two points");
  sc.route = Route(std::move(route_pts));

  try {
    map.finalize();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid map: ") + e.what());
  }
  sc.world = std::move(world);
  return sc;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_scenario(const ScenarioConfig& sc) {
  std::ostringstream os;
  const TownMap& map = sc.world->map;
  os << kScenarioHeader << "\n";
  os << "name = " << sc.name << "\n";
  os << "dt = " << format_double(sc.dt) << "\n";
  os << "time_limit = " << format_double(sc.time_limit) << "\n";
  os << "spawn_jitter = " << format_double(sc.spawn_jitter) << "\n";
  os << "randomize_lights = " << (sc.randomize_lights ? 1 : 0) << "\n";
  for (const auto& l : map.lanes) {
    os << "lane = " << l.id << " " << format_double(l.width);
    for (Vec2 p : l.points) os << " " << fmt_point(p);
    os << "\n";
  }
  for (const auto& in : map.intersections)
    os << "intersection = " << fmt_point(in.center) << " " << format_double(in.half_size) << "\n";
  for (const auto& l : map.lights) {
    os << "light = " << l.id << " " << format_double(l.phase_offset);
    for (const auto& ph : l.schedule) os << " " << color_name(ph.color) << ":" << format_double(ph.duration);
    os << "\n";
  }
  for (const auto& s : map.signs)
    os << "sign = " << s.id << " " << fmt_point(s.position) << " " << format_double(s.influence_radius) << "\n";
  for (const auto& sl : map.stop_lines) {
    os << "stop_line = " << sl.id << " " << fmt_point(sl.position) << " " << format_double(sl.heading) << " "
       << format_double(sl.width) << " " << (sl.control == StopControl::kLight ? "light=" : "sign=") << sl.control_id
       << "\n";
  }
  for (const auto& o : map.obstacles) {
    os << "obstacle = " << fmt_point(o.center) << " " << format_double(o.length) << " " << format_double(o.width)
       << " " << format_double(o.heading) << "\n";
  }
  for (const auto& n : sc.world->npcs) {
    os << "npc = " << format_double(n.speed) << " " << format_double(n.start_time);
    for (Vec2 p : n.path.points()) os << " " << fmt_point(p);
    os << "\n";
  }
  os << "route =";
  for (Vec2 p : sc.route.points()) os << " " << fmt_point(p);
  os << "\n";
  return os.str();
}

void save_scenario(const std::filesystem::path& path, const ScenarioConfig& sc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scenario " + path.string());
  out << format_scenario(sc);
}

std::vector<ScenarioConfig> load_scenario_pack(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("scenario pack directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".scn") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no .scn files in " + dir.string());
  std::vector<ScenarioConfig> out;
  for (const auto& f : files) out.push_back(load_scenario(f));
  return out;
}

SimState initial_state(const ScenarioConfig& sc, std::uint64_t seed, int route_index) {
  SimState s;
  s.world = sc.world;
  s.rng_seed = seed;
  s.route_index = route_index;
  const std::uint64_t name_hash = fnv1a(sc.name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(name_hash), static_cast<std::uint32_t>(name_hash >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const TownMap& map = sc.world->map;
  s.light_shift.assign(map.lights.size(), 0.0);
  if (sc.randomize_lights) {
    for (std::size_t i = 0; i < map.lights.size(); ++i) {
      double cycle = 0.0;
      for (const auto& ph : map.lights[i].schedule) cycle += ph.duration;
      const double u = unit(rng);
      s.light_shift[i] = u * cycle;
    }
  }
  const double lateral = sc.spawn_jitter * (2.0 * unit(rng) - 1.0);
  const double heading = sc.route.heading_at(0.0);
  const Vec2 start = sc.route.point_at(0.0);
  const Vec2 right{std::sin(heading), -std::cos(heading)};
  const Vec2 p = start + lateral * right;
  s.ego.pose = Pose2D(p.x, p.y, heading);
  s.line_armed.assign(map.stop_lines.size(), 1);
  s.sign_status.assign(map.signs.size(), {});
  s.npc_contact.assign(sc.world->npcs.size(), 0);
  s.obstacle_contact.assign(map.obstacles.size(), 0);
  for (const auto& npc : sc.world->npcs) {
    VehicleState v;
    const Vec2 q = npc.path.point_at(0.0);
    v.pose = Pose2D(q.x, q.y, npc.path.heading_at(0.0));
    s.npcs.push_back(v);
  }
  s.offroad = !map.drivable(p);
  return s;
}

std::vector<Vec2> fillet(const std::vector<Vec2>& pts, double radius, double max_step) {
  if (pts.size() < 3) return pts;
  std::vector<Vec2> out{pts.front()};
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const Vec2 a = pts[i - 1], c = pts[i], b = pts[i + 1];
    const Vec2 d1 = (1.0 / norm(c - a)) * (c - a);
    const Vec2 d2 = (1.0 / norm(b - c)) * (b - c);
    const double turn = std::atan2(cross(d1, d2), dot(d1, d2));
    if (std::abs(turn) < 1e-9) {
      out.push_back(c);
      continue;
    }
    const double tlen = radius * std::tan(std::abs(turn) / 2);
    const Vec2 start = c - tlen * d1;
    const Vec2 left{-d1.y, d1.x};
    const double side = turn > 0 ? 1.0 : -1.0;
    const Vec2 center = start + (side * radius) * left;
    const double a0 = std::atan2(start.y - center.y, start.x - center.x);
    const int n = std::max(2, static_cast<int>(std::ceil(std::abs(turn) * radius / max_step)));
    for (int k = 0; k <= n; ++k) {
      const double ang = a0 + turn * k / n;
      out.push_back(center + radius * Vec2{std::cos(ang), std::sin(ang)});
    }
  }
  out.push_back(pts.back());
  return out;
}

std::vector<ScenarioConfig> standard_pack() {
  constexpr double kHalf = 1.75;    // lane offset from road axis
  constexpr double kLaneW = 3.5;
  constexpr double kLineSetback = 4.5;
  const std::vector<double> axes{0.0, 80.0, 160.0};
  const double lo = -30.0, hi = 190.0;

  auto world = std::make_shared<World>();
  TownMap& map = world->map;
  int lane_id = 0;
  for (double a : axes) {
    map.lanes.push_back({lane_id++, kLaneW, {{lo, a - kHalf}, {hi, a - kHalf}}});  // eastbound
    map.lanes.push_back({lane_id++, kLaneW, {{hi, a + kHalf}, {lo, a + kHalf}}});  // westbound
    map.lanes.push_back({lane_id++, kLaneW, {{a + kHalf, lo}, {a + kHalf, hi}}});  // northbound
    map.lanes.push_back({lane_id++, kLaneW, {{a - kHalf, hi}, {a - kHalf, lo}}});  // southbound
  }
  // Checkerboard: lights where (ix + iy) is even, all-way stops elsewhere.
  enum class Node { kLight, kSign };
  auto control = [](double x, double y) {
    const int ix = static_cast<int>(x / 80), iy = static_cast<int>(y / 80);
    return (ix + iy) % 2 == 0 ? Node::kLight : Node::kSign;
  };
  int light_id = 0, sign_id = 0, line_id = 0;
  for (double x : axes) {
    for (double y : axes) {
      // Oversized junction squares leave room for turning arcs to cut corners.
      map.intersections.push_back({{x, y}, 2 * kHalf + 2.5});
      const Node kind = control(x, y);
      struct Approach {
        Vec2 pos;
        double heading;
        bool east_west;
      };
      const Approach approaches[] = {
          {{x - kLineSetback, y - kHalf}, 0.0, true},
          {{x + kLineSetback, y + kHalf}, kPi, true},
          {{x + kHalf, y - kLineSetback}, kPi / 2, false},
          {{x - kHalf, y + kLineSetback}, -kPi / 2, false},
      };
      const double node_offset = std::fmod(3.7 * (x / 80 * 3 + y / 80), 20.0);
      for (const Approach& ap : approaches) {
        StopLine sl{line_id++, ap.pos, ap.heading, kLaneW, StopControl::kLight, 0};
        if (kind == Node::kLight) {
          TrafficLight l;
          l.id = light_id++;
          l.schedule = {{LightColor::kGreen, 8.0}, {LightColor::kYellow, 2.0}, {LightColor::kRed, 10.0}};
          l.phase_offset = node_offset + (ap.east_west ? 0.0 : 10.0);
          sl.control_id = l.id;
          map.lights.push_back(l);
        } else {
          sl.control = StopControl::kSign;
          sl.control_id = sign_id;
          map.signs.push_back({sign_id++, ap.pos, 4.0});
        }
        map.stop_lines.push_back(sl);
      }
    }
  }
  map.obstacles.push_back({{85.5, 40.0}, 4.5, 2.0, kPi / 2});
  map.obstacles.push_back({{40.0, 74.5}, 4.5, 2.0, 0.0});
  map.obstacles.push_back({{120.0, 5.5}, 4.5, 2.0, kPi});
  map.obstacles.push_back({{154.5, 120.0}, 4.5, 2.0, -kPi / 2});
  map.finalize();

  // Routes given by corner points on lane centerlines.
  const double E = -kHalf, W = kHalf, N = kHalf, S = -kHalf;  // lane offsets
  struct RouteSpec {
    const char* name;
    std::vector<Vec2> corners;
    bool lead;
  };
  const std::vector<RouteSpec> specs = {
      {"r00_east_straight", {{-20, 0 + E}, {130, 0 + E}}, true},
      {"r01_north_straight", {{80 + N, -20}, {80 + N, 130}}, false},
      {"r02_west_straight", {{185, 80 + W}, {40, 80 + W}}, false},
      {"r03_south_straight", {{160 + S, 185}, {160 + S, 40}}, true},
      {"r04_east_left", {{-20, 80 + E}, {80 + N, 80 + E}, {80 + N, 140}}, false},
      {"r05_north_right", {{0 + N, -20}, {0 + N, 80 + E}, {60, 80 + E}}, false},
      {"r06_west_left", {{185, 0 + W}, {80 + S, 0 + W}, {80 + S, -25}}, true},
      {"r07_south_right", {{80 + S, 185}, {80 + S, 80 + W}, {15, 80 + W}}, false},
      {"r08_east_right", {{-20, 160 + E}, {80 + S, 160 + E}, {80 + S, 100}}, false},
      {"r09_north_left", {{160 + N, -20}, {160 + N, 80 + W}, {100, 80 + W}}, false},
  };
  std::vector<ScenarioConfig> pack;
  for (const RouteSpec& rs : specs) {
    ScenarioConfig sc;
    sc.name = rs.name;
    sc.route = Route(fillet(rs.corners, 6.0));
    sc.time_limit = std::round(sc.route.length() / 3.0 + 40.0);
    auto w = std::make_shared<World>();
    w->map = map;
    if (rs.lead) {
      // Lead vehicle 25 m ahead on the same lane.
      std::vector<Vec2> path;
      const double s0 = 25.0;
      path.push_back(sc.route.point_at(s0));
      for (std::size_t i = 0; i < sc.route.points().size(); ++i) {
        if (sc.route.project(sc.route.points()[i]).s > s0) path.push_back(sc.route.points()[i]);
      }
      // Drive on past the goal instead of parking on it.
      path.push_back(path.back() + 60.0 * unit_from_heading(sc.route.heading_at(sc.route.length())));
      w->npcs.push_back({4.5, 0.0, Route(std::move(path))});
    }
    sc.world = std::move(w);
    pack.push_back(std::move(sc));
  }
  return pack;
}

}  // namespace pcsg::sim
