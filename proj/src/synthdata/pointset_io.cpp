#include "scdm/errors.hpp"
#include "scdm/io.hpp"
#include "scdm/synthdata.hpp"

#include <algorithm>
#include <filesystem>
#include <string>

namespace scdm::synth {

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void write_pointset(const std::filesystem::path& csv_path, const PointSet& set) {
  std::string text;
  const std::size_t d = set.dim();
  for (std::size_t j = 0; j < d; ++j) text += "dim_" + std::to_string(j) + ",";
  text += "label\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      text += io::format_double(set.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      text += ',';
    }
    text += std::to_string(set.labels ? (*set.labels)[i] : -1);
    text += '\n';
  }
  io::write_text(csv_path, text);
  io::Json meta = {{"name", set.name},
                   {"seed", set.seed},
                   {"d_informative", set.d_informative},
                   {"k_true", set.k_true},
                   {"nuisance_sigma", set.nuisance_sigma}};
  io::write_json(sidecar_path(csv_path), meta);
}

PointSet read_pointset(const std::filesystem::path& csv_path) {
  const io::CsvTable table = io::read_csv(csv_path);
  if (table.header.empty() || table.header.back() != "label") {
    throw IoError(csv_path.string() + ": expected trailing 'label' column");
  }
  const std::size_t d = table.header.size() - 1;
  PointSet set;
  set.x = Matrix(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(d));
  std::vector<int> labels(table.rows.size());
  bool any_label = false;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      set.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = io::parse_double(table.rows[i][j]);
    }
    labels[i] = static_cast<int>(io::parse_int(table.rows[i][d]));
    any_label = any_label || labels[i] >= 0;
  }
  if (any_label) {
    if (std::any_of(labels.begin(), labels.end(), [](int l) { return l < 0; })) {
      throw IoError(csv_path.string() + ": mixed present/absent labels");
    }
    set.labels = labels;
  }
  set.d_informative = d;
  const auto meta_path = sidecar_path(csv_path);
  if (std::filesystem::exists(meta_path)) {
    const io::Json meta = io::read_json(meta_path);
    set.name = meta.value("name", std::string{});
    set.seed = meta.value("seed", std::uint64_t{0});
    set.d_informative = meta.value("d_informative", d);
    set.k_true = meta.value("k_true", std::size_t{0});
    set.nuisance_sigma = meta.value("nuisance_sigma", 0.0);
  }
  if (set.labels && set.k_true == 0) {
    set.k_true = static_cast<std::size_t>(*std::max_element(set.labels->begin(), set.labels->end())) + 1;
  }
  return set;
}

}  // namespace scdm::synth
