#pragma once

// Map files and procedural desk-scale maps.
//
// On disk a map is `<name>.grid` (ASCII, '.' free, '#' occupied, first line is
// the top row) or `<name>.pgm` (binary P5, pixels < 128 occupied, first row is
// the top row), plus a `<name>.json` sidecar {"resolution": r, "origin": [x, y]}.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "navlab/grid.hpp"
#include "navlab/random.hpp"

namespace navlab {

inline std::string grid_to_ascii(const OccupancyGrid& g) {
  std::string out;
  out.reserve(static_cast<std::size_t>(g.width() + 1) * static_cast<std::size_t>(g.height()));
  for (int j = g.height() - 1; j >= 0; --j) {
    for (int i = 0; i < g.width(); ++i) out.push_back(g.occupied(i, j) ? '#' : '.');
    out.push_back('\n');
  }
  return out;
}

inline OccupancyGrid grid_from_ascii(const std::string& text, double resolution, Vec2 origin = {}) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw DataError("empty grid file");
  const int w = static_cast<int>(rows.front().size()), h = static_cast<int>(rows.size());
  OccupancyGrid g(w, h, resolution, origin);
  for (int r = 0; r < h; ++r) {
    if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != w) throw DataError("ragged grid rows");
    for (int i = 0; i < w; ++i) {
      const char c = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
      if (c != '.' && c != '#') throw DataError(std::string("unexpected grid character '") + c + "'");
      g.set(i, h - 1 - r, c == '#');
    }
  }
  return g;
}

inline OccupancyGrid grid_from_pgm(const std::string& bytes, double resolution, Vec2 origin = {}) {
  std::istringstream in(bytes);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError("expected binary PGM (P5)");
  auto next_int = [&]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return std::stoi(tok);
    }
    throw DataError("truncated PGM header");
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval <= 0 || maxval > 255) throw DataError("only 8-bit PGM is supported");
  in.get();
  std::string data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), '\0');
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) throw DataError("truncated PGM data");
  OccupancyGrid g(w, h, resolution, origin);
  for (int r = 0; r < h; ++r)
    for (int i = 0; i < w; ++i)
      g.set(i, h - 1 - r, static_cast<unsigned char>(data[static_cast<std::size_t>(r) * w + i]) < 128);
  return g;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::filesystem::path tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + p.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw DataError("write failed for " + p.string());
  }
  std::filesystem::rename(tmp, p);
}

/// Loads `<stem>.grid` or `<stem>.pgm` with its `<stem>.json` sidecar. `path`
/// may name any of the three files or the bare stem.
inline OccupancyGrid load_map(const std::filesystem::path& path) {
  std::filesystem::path stem = path;
  if (stem.extension() == ".grid" || stem.extension() == ".pgm" || stem.extension() == ".json")
    stem.replace_extension();
  const std::filesystem::path meta = stem.string() + ".json";
  double resolution = 0.1;
  Vec2 origin{};
  if (std::filesystem::exists(meta)) {
    try {
      const auto j = nlohmann::json::parse(read_file(meta));
      resolution = j.at("resolution").get<double>();
      if (j.contains("origin")) origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad map metadata " + meta.string() + ": " + e.what());
    }
  } else {
    throw DataError("missing map metadata " + meta.string());
  }
  const std::filesystem::path ascii = stem.string() + ".grid", pgm = stem.string() + ".pgm";
  if (std::filesystem::exists(ascii)) return grid_from_ascii(read_file(ascii), resolution, origin);
  if (std::filesystem::exists(pgm)) return grid_from_pgm(read_file(pgm), resolution, origin);
  throw DataError("no .grid or .pgm file for map " + stem.string());
}

inline void save_map(const std::filesystem::path& stem, const OccupancyGrid& g) {
  nlohmann::json meta{{"resolution", g.resolution()}, {"origin", {g.origin().x, g.origin().y}}};
  write_file_atomic(stem.string() + ".grid", grid_to_ascii(g));
  write_file_atomic(stem.string() + ".json", meta.dump(2) + "\n");
}

struct RoomMapOptions {
  double width_m = 10.0;
  double height_m = 10.0;
  double resolution = 0.1;
  int num_boxes = 8;
  double box_min = 0.3;
  double box_max = 1.2;
  /// Interior walls, each with one 1.2 m doorway.
  int num_walls = 1;
};

/// Bordered room with random boxes and interior walls with doorways.
inline OccupancyGrid generate_room_map(std::uint64_t seed, const RoomMapOptions& opt = {}) {
  Rng rng = make_rng(seed, {7});
  const int w = static_cast<int>(std::lround(opt.width_m / opt.resolution));
  const int h = static_cast<int>(std::lround(opt.height_m / opt.resolution));
  OccupancyGrid g(w, h, opt.resolution);
  g.fill_border();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int k = 0; k < opt.num_walls; ++k) {
    const bool vertical = u01(rng) < 0.5;
    const double span = vertical ? opt.height_m : opt.width_m;
    const double across = vertical ? opt.width_m : opt.height_m;
    const double at = across * (0.3 + 0.4 * u01(rng));
    const double door = 1.0 + (span - 3.2) * u01(rng);
    const double t = 0.1;
    if (vertical) {
      g.fill_box({at, 0.0}, {at + t, door});
      g.fill_box({at, door + 1.2}, {at + t, span});
    } else {
      g.fill_box({0.0, at}, {door, at + t});
      g.fill_box({door + 1.2, at}, {span, at + t});
    }
  }
  for (int k = 0; k < opt.num_boxes; ++k) {
    const double bw = opt.box_min + (opt.box_max - opt.box_min) * u01(rng);
    const double bh = opt.box_min + (opt.box_max - opt.box_min) * u01(rng);
    const double x = (opt.width_m - bw) * u01(rng), y = (opt.height_m - bh) * u01(rng);
    g.fill_box({x, y}, {x + bw, y + bh});
  }
  return g;
}

}  // namespace navlab
