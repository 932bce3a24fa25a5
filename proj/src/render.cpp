#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "fairmix/harness.h"

namespace fairmix {
namespace {

constexpr double kSize = 480.0;
constexpr double kMargin = 48.0;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string render_scatter(const std::vector<Vector>& points,
                           const std::vector<AttributeAssignment>& labels,
                           const MixtureWorld& world, std::size_t attribute) {
  if (world.dimension() != 2)
    throw ConfigError("scatter rendering supports 2-D worlds only (world has dimension " +
                      std::to_string(world.dimension()) + ")");
  if (labels.size() != points.size())
    throw ConfigError("one label per point is required");
  const auto& schema = world.schema();
  if (!schema.empty() && attribute >= schema.size())
    throw ConfigError("render attribute out of range");

  double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  bool first = true;
  auto extend = [&](const Vector& p) {
    if (first) {
      lo_x = hi_x = p[0];
      lo_y = hi_y = p[1];
      first = false;
    }
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
  };
  for (const auto& c : world.components()) extend(c.mean);
  for (const auto& p : points) extend(p);
  const double pad = 1.0;
  lo_x -= pad, hi_x += pad, lo_y -= pad, hi_y += pad;
  const double span = std::max(hi_x - lo_x, hi_y - lo_y);
  const double scale = (kSize - 2 * kMargin) / span;
  auto sx = [&](double x) { return kMargin + (x - lo_x) * scale; };
  auto sy = [&](double y) { return kSize - kMargin - (y - lo_y) * scale; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize
      << "\" height=\"" << kSize << "\" viewBox=\"0 0 " << kSize << " " << kSize
      << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"white\"/>\n";
  svg << "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  svg << "<line x1=\"" << fmt(kMargin) << "\" y1=\"" << fmt(kSize - kMargin)
      << "\" x2=\"" << fmt(kSize - kMargin) << "\" y2=\"" << fmt(kSize - kMargin)
      << "\"/>\n";
  svg << "<line x1=\"" << fmt(kMargin) << "\" y1=\"" << fmt(kMargin) << "\" x2=\""
      << fmt(kMargin) << "\" y2=\"" << fmt(kSize - kMargin) << "\"/>\n";
  svg << "</g>\n";
  svg << "<g id=\"ticks\" font-family=\"sans-serif\" font-size=\"10\">\n";
  svg << "<text x=\"" << fmt(kMargin) << "\" y=\"" << fmt(kSize - kMargin + 14)
      << "\">" << fmt(lo_x) << "</text>\n";
  svg << "<text x=\"" << fmt(kSize - kMargin - 30) << "\" y=\""
      << fmt(kSize - kMargin + 14) << "\">" << fmt(lo_x + span) << "</text>\n";
  svg << "<text x=\"4\" y=\"" << fmt(kSize - kMargin) << "\">" << fmt(lo_y)
      << "</text>\n";
  svg << "<text x=\"4\" y=\"" << fmt(kMargin + 4) << "\">" << fmt(lo_y + span)
      << "</text>\n";
  svg << "</g>\n";

  std::set<std::size_t> present;
  svg << "<g id=\"samples\">\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t v = schema.empty() ? 0 : labels[i].at(attribute);
    present.insert(v);
    svg << "<circle cx=\"" << fmt(sx(points[i][0])) << "\" cy=\""
        << fmt(sy(points[i][1])) << "\" r=\"2.5\" fill=\"" << kPalette[v % 8]
        << "\" fill-opacity=\"0.6\"/>\n";
  }
  svg << "</g>\n";

  svg << "<g id=\"means\" stroke=\"black\" stroke-width=\"2\">\n";
  for (const auto& c : world.components()) {
    const double x = sx(c.mean[0]), y = sy(c.mean[1]);
    svg << "<path d=\"M " << fmt(x - 5) << " " << fmt(y - 5) << " L " << fmt(x + 5)
        << " " << fmt(y + 5) << " M " << fmt(x - 5) << " " << fmt(y + 5) << " L "
        << fmt(x + 5) << " " << fmt(y - 5) << "\"/>\n";
  }
  svg << "</g>\n";

  svg << "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n";
  double ly = 16;
  for (std::size_t v : present) {
    const std::string name =
        schema.empty() ? "all" : schema[attribute].name + "=" + schema[attribute].values[v];
    svg << "<rect class=\"legend-entry\" x=\"" << fmt(kSize - 130) << "\" y=\""
        << fmt(ly - 9) << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[v % 8]
        << "\"/><text x=\"" << fmt(kSize - 115) << "\" y=\"" << fmt(ly) << "\">"
        << name << "</text>\n";
    ly += 16;
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace fairmix
