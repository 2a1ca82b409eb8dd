#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "strokeopt/errors.hpp"
#include "strokeopt/geometry.hpp"

namespace strokeopt {

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline char path_command(int degree) {
  switch (degree) {
    case 1:
      return 'L';
    case 2:
      return 'Q';
    case 3:
      return 'C';
  }
  throw DomainError("unsupported stroke degree " + std::to_string(degree));
}

}  // namespace detail

// "M x0 y0 C x1 y1 x2 y2 x3 y3" (Q for quadratics, L for lines), 6 fixed decimals.
inline std::string svg_path_data(const Stroke& s) {
  s.validate();
  std::string d = "M " + detail::fixed6(s.points[0].x) + " " + detail::fixed6(s.points[0].y) + " ";
  d += detail::path_command(s.degree());
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    d += " " + detail::fixed6(s.points[i].x) + " " + detail::fixed6(s.points[i].y);
  }
  return d;
}

inline std::string to_svg(const Sketch& sketch) {
  const auto w = std::to_string(sketch.canvas.width);
  const auto h = std::to_string(sketch.canvas.height);
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + w + "\" height=\"" + h +
         "\" viewBox=\"0 0 " + w + " " + h + "\">\n";
  for (const auto& s : sketch.strokes) {
    out += "  <path d=\"" + svg_path_data(s) + "\" fill=\"none\" stroke=\"black\" stroke-width=\"" +
           detail::fixed6(s.width) + "\" stroke-linecap=\"round\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

inline void export_svg(const Sketch& sketch, const std::string& path) {
  const std::string text = to_svg(sketch);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f) throw IoError("failed writing " + path);
}

namespace detail {

inline std::string attribute(std::string_view element, std::string_view name) {
  const std::string key = " " + std::string(name) + "=\"";
  const auto at = element.find(key);
  if (at == std::string_view::npos) throw IoError("svg element lacks attribute " + std::string(name));
  const auto start = at + key.size();
  const auto end = element.find('"', start);
  if (end == std::string_view::npos) throw IoError("unterminated svg attribute " + std::string(name));
  return std::string(element.substr(start, end - start));
}

inline std::vector<double> parse_numbers(std::string_view text) {
  std::vector<double> out;
  const std::string buf(text);
  const char* p = buf.c_str();
  while (*p != '\0') {
    if (std::isspace(static_cast<unsigned char>(*p)) || *p == ',') {
      ++p;
      continue;
    }
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p) throw IoError("malformed number in svg: " + buf);
    out.push_back(v);
    p = end;
  }
  return out;
}

inline Stroke parse_path(std::string_view d, double width) {
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < d.size() && std::isspace(static_cast<unsigned char>(d[i]))) ++i;
  };
  skip_ws();
  if (i >= d.size() || d[i] != 'M') throw IoError("svg path must start with M");
  ++i;
  const auto cmd_at = d.find_first_of("LQC", i);
  if (cmd_at == std::string_view::npos) throw IoError("svg path lacks L, Q or C segment");
  const auto start = parse_numbers(d.substr(i, cmd_at - i));
  const auto rest = parse_numbers(d.substr(cmd_at + 1));
  const int degree = d[cmd_at] == 'L' ? 1 : d[cmd_at] == 'Q' ? 2 : 3;
  if (start.size() != 2 || rest.size() != 2 * static_cast<std::size_t>(degree)) {
    throw IoError("svg path has the wrong number of coordinates");
  }
  Stroke s;
  s.width = width;
  s.points.push_back({start[0], start[1]});
  for (int j = 0; j < degree; ++j) s.points.push_back({rest[2 * j], rest[2 * j + 1]});
  return s;
}

}  // namespace detail

// Reads back the subset of SVG that to_svg writes: the root viewBox and each <path>.
inline Sketch parse_svg(std::string_view text) {
  Sketch sketch;
  const auto svg_at = text.find("<svg");
  if (svg_at == std::string_view::npos) throw IoError("no <svg> element");
  const auto svg_end = text.find('>', svg_at);
  const auto view = detail::parse_numbers(detail::attribute(text.substr(svg_at, svg_end - svg_at), "viewBox"));
  if (view.size() != 4) throw IoError("viewBox must have four numbers");
  sketch.canvas = {static_cast<int>(view[2]), static_cast<int>(view[3])};

  std::size_t pos = svg_end;
  while ((pos = text.find("<path", pos)) != std::string_view::npos) {
    const auto end = text.find('>', pos);
    if (end == std::string_view::npos) throw IoError("unterminated <path>");
    const auto element = text.substr(pos, end - pos);
    const auto width = detail::parse_numbers(detail::attribute(element, "stroke-width"));
    if (width.size() != 1) throw IoError("malformed stroke-width");
    sketch.strokes.push_back(detail::parse_path(detail::attribute(element, "d"), width[0]));
    pos = end;
  }
  return sketch;
}

inline Sketch read_svg(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  const std::string text((std::istreambuf_iterator<char>(f)), {});
  return parse_svg(text);
}

}  // namespace strokeopt
