#include <istream>
#include <ostream>
#include <sstream>

#include "fairmix/eval.h"

namespace fairmix {
namespace {

std::string value_list(const Attribute& attr, const std::vector<double>& p) {
  std::string out;
  for (std::size_t v = 0; v < attr.values.size(); ++v) {
    if (v) out += ';';
    out += attr.values[v] + "=" + format_double(p[v]);
  }
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  return out;
}

}  // namespace

void write_report_csv(std::ostream& out, const BiasReport& report,
                      const AttributeSchema& schema,
                      const TargetDistribution& target) {
  out << "# fairmix bias-report v1\n";
  out << "# config_digest=" << report.config_digest << " seed=" << report.seed
      << " samples_per_prompt=" << report.samples_per_prompt << "\n";
  out << "prompt_id,concept,attribute,samples,proportions,targets,abs_deviation\n";
  for (std::size_t n = 0; n < report.bias.prompts.size(); ++n) {
    const auto& pb = report.bias.prompts[n];
    const std::string concept_id =
        n < report.prompt_concepts.size() ? report.prompt_concepts[n] : "";
    for (std::size_t a = 0; a < schema.size(); ++a)
      out << pb.prompt_id << "," << concept_id << "," << schema[a].name << ","
          << pb.samples << "," << value_list(schema[a], pb.proportions[a])
          << "," << value_list(schema[a], target.attribute(a)) << ","
          << format_double(pb.deviation[a]) << "\n";
  }
  out << "# summary\n";
  out << "metric,attribute,value\n";
  for (std::size_t a = 0; a < schema.size(); ++a)
    out << "B," << schema[a].name << ","
        << format_double(report.bias.per_attribute[a]) << "\n";
  out << "B,combined," << format_double(report.bias.combined) << "\n";
  out << "Q,all," << format_double(report.quality.q) << "\n";
  out << "log_density,all," << format_double(report.quality.mean_log_density)
      << "\n";
}

ReportSummary read_report_summary(std::istream& in) {
  ReportSummary s;
  std::string line;
  bool in_summary = false;
  bool found = false;
  while (std::getline(in, line)) {
    if (line == "# summary") {
      in_summary = true;
      continue;
    }
    if (!in_summary || line.empty() || line[0] == '#' ||
        line == "metric,attribute,value")
      continue;
    const auto cells = split(line, ',');
    if (cells.size() != 3) throw ConfigError("malformed summary row: " + line);
    const double v = std::stod(cells[2]);
    found = true;
    if (cells[0] == "B" && cells[1] == "combined")
      s.combined = v;
    else if (cells[0] == "B")
      s.bias.emplace_back(cells[1], v);
    else if (cells[0] == "Q")
      s.q = v;
    else if (cells[0] == "log_density")
      s.mean_log_density = v;
  }
  if (!found) throw ConfigError("report has no summary block");
  return s;
}

}  // namespace fairmix
