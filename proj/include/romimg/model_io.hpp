#ifndef ROMIMG_MODEL_IO_HPP
#define ROMIMG_MODEL_IO_HPP

#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "romimg/media.hpp"

namespace romimg {

// Velocity model file: a text header terminated by a line "data", then the
// nodal values in row-major order (iy outer), either as CSV rows or as raw
// little-endian binary64.
//
//   ROMVEL 1
//   nx 80
//   ny 60
//   h 10
//   origin 0 0
//   length_unit m          (m | km)
//   velocity_unit m/s      (m/s | km/s)
//   boundary accessible inaccessible inaccessible inaccessible   (top bottom left right)
//   encoding csv           (csv | binary)
//   data
enum class ModelEncoding { csv, binary };

namespace detail {
inline const char* label_name(EdgeLabel l) { return l == EdgeLabel::accessible ? "accessible" : "inaccessible"; }
inline EdgeLabel parse_label(const std::string& s) {
  if (s == "accessible") return EdgeLabel::accessible;
  if (s == "inaccessible") return EdgeLabel::inaccessible;
  throw ValidationError("bad boundary label '" + s + "'");
}
}  // namespace detail

inline std::string encode_velocity_model(const VelocityModel& m, ModelEncoding enc = ModelEncoding::csv) {
  m.validate();
  std::ostringstream os;
  os << std::setprecision(17);
  os << "ROMVEL 1\n"
     << "nx " << m.grid.nx << "\nny " << m.grid.ny << "\nh " << m.grid.h << "\norigin " << m.grid.ox << ' '
     << m.grid.oy << "\nlength_unit m\nvelocity_unit m/s\nboundary " << detail::label_name(m.boundary.top) << ' '
     << detail::label_name(m.boundary.bottom) << ' ' << detail::label_name(m.boundary.left) << ' '
     << detail::label_name(m.boundary.right) << "\nencoding " << (enc == ModelEncoding::csv ? "csv" : "binary")
     << "\ndata\n";
  std::string out = os.str();
  if (enc == ModelEncoding::csv) {
    std::ostringstream body;
    body << std::setprecision(17);
    for (int iy = 0; iy < m.grid.ny; ++iy) {
      for (int ix = 0; ix < m.grid.nx; ++ix) body << (ix ? "," : "") << m.at(ix, iy);
      body << '\n';
    }
    out += body.str();
  } else {
    for (Eigen::Index i = 0; i < m.c.size(); ++i) detail::put_le(out, m.c[i]);
  }
  return out;
}

inline VelocityModel decode_velocity_model(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    require(pos < bytes.size(), "velocity model header ends early");
    const std::size_t e = bytes.find('\n', pos);
    require(e != std::string::npos, "velocity model header ends early");
    std::string line = bytes.substr(pos, e - pos);
    pos = e + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  require(next_line() == "ROMVEL 1", "not a velocity model file (missing 'ROMVEL 1')");
  VelocityModel m;
  double length_scale = 1.0, velocity_scale = 1.0;
  ModelEncoding enc = ModelEncoding::csv;
  for (;;) {
    const std::string line = next_line();
    if (line == "data") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "nx") ls >> m.grid.nx;
    else if (key == "ny") ls >> m.grid.ny;
    else if (key == "h") ls >> m.grid.h;
    else if (key == "origin") ls >> m.grid.ox >> m.grid.oy;
    else if (key == "length_unit") {
      std::string u;
      ls >> u;
      require(u == "m" || u == "km", "length_unit must be m or km");
      length_scale = u == "km" ? 1000.0 : 1.0;
    } else if (key == "velocity_unit") {
      std::string u;
      ls >> u;
      require(u == "m/s" || u == "km/s", "velocity_unit must be m/s or km/s");
      velocity_scale = u == "km/s" ? 1000.0 : 1.0;
    } else if (key == "boundary") {
      std::string t, b, l, r;
      ls >> t >> b >> l >> r;
      m.boundary = {detail::parse_label(t), detail::parse_label(b), detail::parse_label(l), detail::parse_label(r)};
    } else if (key == "encoding") {
      std::string e;
      ls >> e;
      require(e == "csv" || e == "binary", "encoding must be csv or binary");
      enc = e == "csv" ? ModelEncoding::csv : ModelEncoding::binary;
    } else if (!key.empty() && key[0] != '#') {
      throw ValidationError("unknown velocity model header key '" + key + "'");
    }
    require(!ls.fail(), "malformed header line '" + line + "'");
  }
  m.grid.h *= length_scale;
  m.grid.ox *= length_scale;
  m.grid.oy *= length_scale;
  m.grid.validate();
  m.c.resize(m.grid.size());
  if (enc == ModelEncoding::binary) {
    for (Eigen::Index i = 0; i < m.c.size(); ++i) m.c[i] = detail::get_le<double>(bytes, pos);
  } else {
    std::string body = bytes.substr(pos);
    for (char& ch : body)
      if (ch == ',') ch = ' ';
    std::istringstream bs(body);
    for (Eigen::Index i = 0; i < m.c.size(); ++i) {
      bs >> m.c[i];
      require(!bs.fail(), "velocity model has too few values");
    }
  }
  m.c *= velocity_scale;
  m.validate();
  return m;
}

inline void save_velocity_model(const std::string& path, const VelocityModel& m,
                                ModelEncoding enc = ModelEncoding::csv) {
  detail::write_file(path, encode_velocity_model(m, enc));
}

inline VelocityModel load_velocity_model(const std::string& path) {
  return decode_velocity_model(detail::read_file(path));
}

}  // namespace romimg

#endif  // ROMIMG_MODEL_IO_HPP
