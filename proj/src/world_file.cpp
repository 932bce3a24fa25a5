#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "fairmix/world.h"

// World file grammar, one directive per line, '#' starts a comment:
//
//   dimension <d>
//   attribute <name> <value> <value> [...]
//   concept <name> [<name> ...]
//   component
//     concept <name>
//     tag <attribute> <value>          (one per attribute)
//     weight <w>                       (default 1)
//     mean <x_1> ... <x_d>
//     covariance <row-major d*d reals> (default identity)
//   end

namespace fairmix {
namespace {

struct PendingComponent {
  int line = 0;
  std::string concept_name;
  int concept_line = 0;
  std::vector<std::pair<std::string, std::string>> tags;
  std::vector<int> tag_lines;
  std::optional<double> weight;
  std::vector<double> mean;
  std::vector<double> covariance;
  bool has_mean = false;
};

class Parser {
 public:
  explicit Parser(const std::string& source) : source_(source) {}

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
  }

  double number(int line, const std::string& token) const {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size() ||
        !std::isfinite(v))
      fail(line, "expected a finite number, got '" + token + "'");
    return v;
  }

  MixtureWorld parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    std::optional<PendingComponent> open;
    while (std::getline(in, raw)) {
      ++line;
      if (auto hash = raw.find('#'); hash != std::string::npos)
        raw.erase(hash);
      std::istringstream words(raw);
      std::vector<std::string> tok;
      for (std::string w; words >> w;) tok.push_back(w);
      if (tok.empty()) continue;
      const std::string& key = tok[0];

      if (open) {
        if (key == "end") {
          components_.push_back(std::move(*open));
          open.reset();
        } else if (key == "concept") {
          if (tok.size() != 2) fail(line, "component concept takes one name");
          open->concept_name = tok[1];
          open->concept_line = line;
        } else if (key == "tag") {
          if (tok.size() != 3) fail(line, "tag takes <attribute> <value>");
          open->tags.emplace_back(tok[1], tok[2]);
          open->tag_lines.push_back(line);
        } else if (key == "weight") {
          if (tok.size() != 2) fail(line, "weight takes one number");
          open->weight = number(line, tok[1]);
          if (!(*open->weight > 0.0)) fail(line, "weight must be positive");
        } else if (key == "mean") {
          open->mean.clear();
          for (std::size_t i = 1; i < tok.size(); ++i)
            open->mean.push_back(number(line, tok[i]));
          open->has_mean = true;
          if (dimension_ && static_cast<int>(open->mean.size()) != *dimension_)
            fail(line, "mean has " + std::to_string(open->mean.size()) +
                           " entries, dimension is " +
                           std::to_string(*dimension_));
        } else if (key == "covariance") {
          open->covariance.clear();
          for (std::size_t i = 1; i < tok.size(); ++i)
            open->covariance.push_back(number(line, tok[i]));
          if (dimension_ && static_cast<int>(open->covariance.size()) !=
                                *dimension_ * *dimension_)
            fail(line, "covariance needs d*d entries");
        } else {
          fail(line, "unknown component directive '" + key + "'");
        }
        continue;
      }

      if (key == "dimension") {
        if (tok.size() != 2) fail(line, "dimension takes one integer");
        if (dimension_) fail(line, "dimension declared twice");
        const double d = number(line, tok[1]);
        if (d < 1 || d != std::floor(d) || d > 4096)
          fail(line, "dimension must be a positive integer");
        dimension_ = static_cast<int>(d);
      } else if (key == "attribute") {
        if (tok.size() < 4)
          fail(line, "attribute needs a name and at least 2 values");
        Attribute attr{tok[1], {tok.begin() + 2, tok.end()}};
        for (const auto& prev : attributes_)
          if (prev.name == attr.name)
            fail(line, "duplicate attribute '" + attr.name + "'");
        attributes_.push_back(std::move(attr));
        try {
          AttributeSchema check({attributes_.back()});
        } catch (const ConfigError& e) {
          fail(line, e.what());
        }
      } else if (key == "concept") {
        if (tok.size() < 2) fail(line, "concept needs a name");
        for (std::size_t i = 1; i < tok.size(); ++i) {
          if (concept_lines_.count(tok[i]))
            fail(line, "duplicate concept '" + tok[i] + "'");
          concepts_.push_back(tok[i]);
          concept_lines_[tok[i]] = line;
        }
      } else if (key == "component") {
        if (tok.size() != 1) fail(line, "component takes no arguments");
        open.emplace();
        open->line = line;
      } else if (key == "end") {
        fail(line, "'end' without an open component");
      } else {
        fail(line, "unknown directive '" + key + "'");
      }
    }
    if (open) fail(open->line, "component is never closed with 'end'");
    if (!dimension_) fail(line, "missing 'dimension'");
    return build();
  }

 private:
  MixtureWorld build() {
    AttributeSchema schema(attributes_);
    std::vector<Component> comps;
    for (const auto& pc : components_) {
      Component comp;
      if (pc.concept_name.empty()) fail(pc.line, "component has no concept");
      auto it = std::find(concepts_.begin(), concepts_.end(), pc.concept_name);
      if (it == concepts_.end())
        fail(pc.concept_line, "unknown concept '" + pc.concept_name + "'");
      comp.concept_id = static_cast<std::size_t>(it - concepts_.begin());
      if (!pc.has_mean) fail(pc.line, "component has no mean");
      if (static_cast<int>(pc.mean.size()) != *dimension_)
        fail(pc.line, "mean does not match dimension");
      comp.mean = Eigen::Map<const Vector>(pc.mean.data(), *dimension_);
      comp.weight = pc.weight.value_or(1.0);
      comp.tags.assign(schema.size(), SIZE_MAX);
      for (std::size_t i = 0; i < pc.tags.size(); ++i) {
        const auto& [attr, value] = pc.tags[i];
        auto a = schema.find(attr);
        if (!a) fail(pc.tag_lines[i], "unknown attribute '" + attr + "'");
        auto v = schema.find_value(*a, value);
        if (!v)
          fail(pc.tag_lines[i],
               "attribute '" + attr + "' has no value '" + value + "'");
        if (comp.tags[*a] != SIZE_MAX)
          fail(pc.tag_lines[i], "attribute '" + attr + "' tagged twice");
        comp.tags[*a] = *v;
      }
      for (std::size_t a = 0; a < schema.size(); ++a)
        if (comp.tags[a] == SIZE_MAX)
          fail(pc.line, "component is missing a tag for attribute '" +
                            schema[a].name + "'");
      if (!pc.covariance.empty()) {
        if (static_cast<int>(pc.covariance.size()) != *dimension_ * *dimension_)
          fail(pc.line, "covariance needs d*d entries");
        comp.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                         Eigen::Dynamic,
                                                         Eigen::RowMajor>>(
            pc.covariance.data(), *dimension_, *dimension_);
      }
      comps.push_back(std::move(comp));
    }
    try {
      return MixtureWorld(*dimension_, std::move(schema), concepts_,
                          std::move(comps));
    } catch (const ConfigError& e) {
      // Map "component k: ..." back to the declaring line.
      std::string msg = e.what();
      int line = 1;
      if (msg.rfind("component ", 0) == 0) {
        const auto k = std::strtoul(msg.c_str() + 10, nullptr, 10);
        if (k < components_.size()) line = components_[k].line;
      } else if (msg.rfind("concept '", 0) == 0) {
        const auto end = msg.find('\'', 9);
        auto it = concept_lines_.find(msg.substr(9, end - 9));
        if (it != concept_lines_.end()) line = it->second;
      }
      fail(line, msg);
    }
  }

  std::string source_;
  std::optional<int> dimension_;
  std::vector<Attribute> attributes_;
  std::vector<std::string> concepts_;
  std::map<std::string, int> concept_lines_;
  std::vector<PendingComponent> components_;
};

}  // namespace

MixtureWorld parse_world(std::string_view text, const std::string& source) {
  return Parser(source).parse(text);
}

MixtureWorld load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_world(buf.str(), path);
}

std::string format_world(const MixtureWorld& world) {
  std::ostringstream out;
  out << "dimension " << world.dimension() << "\n";
  for (const auto& attr : world.schema().attributes()) {
    out << "attribute " << attr.name;
    for (const auto& v : attr.values) out << " " << v;
    out << "\n";
  }
  for (const auto& c : world.concepts()) out << "concept " << c << "\n";
  for (const auto& comp : world.components()) {
    out << "component\n  concept " << world.concepts()[comp.concept_id] << "\n";
    for (std::size_t a = 0; a < world.schema().size(); ++a)
      out << "  tag " << world.schema()[a].name << " "
          << world.schema()[a].values[comp.tags[a]] << "\n";
    out << "  weight " << format_double(comp.weight) << "\n  mean";
    for (Eigen::Index i = 0; i < comp.mean.size(); ++i)
      out << " " << format_double(comp.mean[i]);
    out << "\n";
    if (!comp.identity_covariance) {
      out << "  covariance";
      for (Eigen::Index r = 0; r < comp.covariance.rows(); ++r)
        for (Eigen::Index c = 0; c < comp.covariance.cols(); ++c)
          out << " " << format_double(comp.covariance(r, c));
      out << "\n";
    }
    out << "end\n";
  }
  return out.str();
}

}  // namespace fairmix
