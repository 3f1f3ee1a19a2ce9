#include "repsim/report.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "repsim/error.hpp"

namespace repsim {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

ojson matrix_rows(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const nlohmann::json& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != n) throw ValidationError("matrix is not square");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

ojson variant_names(const std::vector<Variant>& variants) {
  ojson names = ojson::array();
  for (const Variant v : variants) names.push_back(std::string(variant_name(v)));
  return names;
}

std::vector<Variant> variants_from(const nlohmann::json& names) {
  std::vector<Variant> out;
  for (const auto& name : names) {
    const auto v = parse_variant(name.get<std::string>());
    if (!v) throw ValidationError("unknown variant '" + name.get<std::string>() + "'");
    out.push_back(*v);
  }
  return out;
}

void require_kind(const nlohmann::json& doc, std::string_view kind) {
  if (!doc.is_object() || !doc.contains("kind") || doc.at("kind") != kind) {
    throw ValidationError("expected a '" + std::string(kind) + "' artifact");
  }
}

template <typename F>
auto guarded(std::string_view what, F&& body) {
  try {
    return body();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed " + std::string(what) + " artifact: " + e.what());
  }
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string matrix_text(const nlohmann::json& variants, const nlohmann::json& values) {
  std::ostringstream out;
  out << std::string(12, ' ');
  for (const auto& v : variants) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%11s", v.get<std::string>().c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < variants.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-12s", variants[i].get<std::string>().c_str());
    out << buf;
    for (const auto& x : values[i]) {
      std::snprintf(buf, sizeof buf, "%11s", fixed(x.get<double>(), 4).c_str());
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

ojson similarity_to_json(const SimilarityMatrix& matrix, const SimilarityOptions& options,
                         const RunMetadata& meta) {
  ojson doc;
  doc["kind"] = "similarity";
  doc["metric"] = std::string(metric_name(matrix.metric));
  doc["variants"] = variant_names(matrix.variants);
  doc["values"] = matrix_rows(matrix.values);
  doc["samples_used"] = matrix.samples_used;
  doc["l2_normalize"] = options.l2_normalize;
  doc["max_samples"] = options.max_samples;
  if (matrix.metric == Metric::CkaRbf) doc["rbf_bandwidth"] = options.rbf_bandwidth;
  if (matrix.metric == Metric::CcaR2) {
    doc["rank_tolerance"] = kRankTolerance;
    doc["ill_conditioned"] = matrix.ill_conditioned;
  }
  doc["metadata"] = to_json(meta);
  return doc;
}

SimilarityMatrix similarity_from_json(const nlohmann::json& doc) {
  require_kind(doc, "similarity");
  return guarded("similarity", [&] {
    SimilarityMatrix m;
    const auto metric = parse_metric(doc.at("metric").get<std::string>());
    if (!metric) throw ValidationError("unknown metric in similarity artifact");
    m.metric = *metric;
    m.variants = variants_from(doc.at("variants"));
    m.values = matrix_from_rows(doc.at("values"));
    m.samples_used = doc.at("samples_used").get<std::size_t>();
    m.ill_conditioned = doc.value("ill_conditioned", false);
    return m;
  });
}

ojson probe_to_json(const ProbeReport& report, const RunMetadata& meta) {
  ojson doc;
  doc["kind"] = "probe";
  doc["model"] = report.model_name;
  doc["dataset"] = report.dataset_name;
  doc["config"] = {{"n_folds", report.config.n_folds},
                   {"l2_penalty", report.config.l2_penalty},
                   {"max_iterations", report.config.max_iterations},
                   {"convergence_tol", report.config.convergence_tol},
                   {"seed", report.config.seed},
                   {"classifier", "multinomial logistic regression (L-BFGS)"},
                   {"standardization", "z-score from training fold"},
                   {"folds", "stratified, shared across variants"},
                   {"std", "population"}};
  ojson per_variant = ojson::object();
  for (const auto& [variant, score] : report.per_variant) {
    per_variant[std::string(variant_name(variant))] = {
        {"mean", score.mean},
        {"std", score.std},
        {"per_fold", score.per_fold},
        {"converged", score.converged},
        {"formatted", format_mean_std(score.mean, score.std)}};
  }
  doc["per_variant"] = std::move(per_variant);
  doc["table"] = probe_table(report);
  doc["metadata"] = to_json(meta);
  return doc;
}

ProbeReport probe_from_json(const nlohmann::json& doc) {
  require_kind(doc, "probe");
  return guarded("probe", [&] {
    ProbeReport r;
    r.model_name = doc.at("model").get<std::string>();
    r.dataset_name = doc.at("dataset").get<std::string>();
    const auto& c = doc.at("config");
    r.config.n_folds = c.at("n_folds").get<int>();
    r.config.l2_penalty = c.at("l2_penalty").get<double>();
    r.config.max_iterations = c.at("max_iterations").get<int>();
    r.config.convergence_tol = c.at("convergence_tol").get<double>();
    r.config.seed = c.at("seed").get<std::uint64_t>();
    for (const auto& [name, entry] : doc.at("per_variant").items()) {
      const auto v = parse_variant(name);
      if (!v) throw ValidationError("unknown variant '" + name + "'");
      VariantScore s;
      s.mean = entry.at("mean").get<double>();
      s.std = entry.at("std").get<double>();
      s.per_fold = entry.at("per_fold").get<std::vector<double>>();
      s.converged = entry.at("converged").get<std::vector<bool>>();
      r.per_variant.emplace(*v, std::move(s));
    }
    return r;
  });
}

ojson purity_to_json(const PurityReport& report, const RunMetadata& meta) {
  ojson doc;
  doc["kind"] = "purity";
  doc["k"] = report.k;
  doc["distance"] = std::string(distance_name(report.distance));
  doc["variants"] = variant_names(report.variants);
  ojson per_variant = ojson::object();
  for (std::size_t i = 0; i < report.variants.size(); ++i) {
    per_variant[std::string(variant_name(report.variants[i]))] = report.per_variant[i];
  }
  doc["per_variant"] = std::move(per_variant);
  doc["confusion"] = matrix_rows(report.confusion);
  doc["metadata"] = to_json(meta);
  return doc;
}

PurityReport purity_from_json(const nlohmann::json& doc) {
  require_kind(doc, "purity");
  return guarded("purity", [&] {
    PurityReport r;
    r.k = doc.at("k").get<int>();
    r.distance = doc.at("distance") == "cosine" ? Distance::Cosine : Distance::Euclidean;
    r.variants = variants_from(doc.at("variants"));
    r.confusion = matrix_from_rows(doc.at("confusion"));
    for (const Variant v : r.variants) {
      r.per_variant.push_back(doc.at("per_variant").at(std::string(variant_name(v))).get<double>());
    }
    return r;
  });
}

Artifact load_artifact(const fs::path& path) {
  fs::path json_path = path;
  if (path.extension() == ".csv") json_path.replace_extension(".json");
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw IoError("cannot open artifact '" + json_path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Artifact a;
  a.source = json_path;
  try {
    a.doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("artifact '" + json_path.string() + "' is not valid JSON: " + e.what());
  }
  if (!a.doc.is_object() || !a.doc.contains("kind") || !a.doc.contains("metadata")) {
    throw ValidationError("'" + json_path.string() + "' is not a toolkit artifact");
  }
  a.kind = a.doc.at("kind").get<std::string>();
  return a;
}

ojson build_report(std::span<const Artifact> artifacts) {
  if (artifacts.empty()) throw ValidationError("nothing to report: no artifacts given");

  const auto digest_of = [](const Artifact& a) {
    return guarded("metadata", [&] { return a.doc.at("metadata").at("manifest_digest").get<std::string>(); });
  };
  const std::string digest = digest_of(artifacts.front());
  if (digest.empty()) {
    throw ValidationError("'" + artifacts.front().source.string() + "' has no manifest digest");
  }
  for (const auto& a : artifacts.subspan(1)) {
    if (digest_of(a) != digest) {
      throw ValidationError("cross-run contamination: '" + a.source.string() +
                            "' was produced from manifest digest " + digest_of(a) + " but '" +
                            artifacts.front().source.string() + "' from " + digest);
    }
  }

  ojson report;
  report["kind"] = "report";
  report["manifest_digest"] = digest;
  ojson sources = ojson::array();
  for (const auto& a : artifacts) {
    ojson entry;
    entry["path"] = a.source.string();
    entry["kind"] = a.kind;
    sources.push_back(std::move(entry));
  }
  report["sources"] = std::move(sources);

  for (const auto& a : artifacts) {
    if (a.kind == "probe") {
      const ProbeReport probe = probe_from_json(a.doc);
      ojson section;
      section["model"] = probe.model_name;
      section["dataset"] = probe.dataset_name;
      section["table"] = probe_table(probe);
      section["per_variant"] = a.doc.at("per_variant");
      section["config"] = a.doc.at("config");
      report["probe"] = std::move(section);
    } else if (a.kind == "similarity") {
      const SimilarityMatrix sim = similarity_from_json(a.doc);
      ojson section;
      section["variants"] = a.doc.at("variants");
      section["values"] = a.doc.at("values");
      section["csv"] = similarity_to_csv(sim);
      report["similarity"][std::string(metric_name(sim.metric))] = std::move(section);
    } else if (a.kind == "purity") {
      purity_from_json(a.doc);
      ojson section;
      section["k"] = a.doc.at("k");
      section["distance"] = a.doc.at("distance");
      section["variants"] = a.doc.at("variants");
      section["per_variant"] = a.doc.at("per_variant");
      section["confusion"] = a.doc.at("confusion");
      report["purity"] = std::move(section);
    } else {
      throw ValidationError("'" + a.source.string() + "': cannot report artifact kind '" + a.kind + "'");
    }
  }
  return report;
}

std::string render_report_text(const ojson& report) {
  std::ostringstream out;
  out << "manifest digest: " << report.at("manifest_digest").get<std::string>() << "\n\n";
  if (report.contains("probe")) {
    out << "Linear probe (balanced accuracy, mean_(std) over folds)\n"
        << report["probe"]["table"].get<std::string>() << '\n';
  }
  if (report.contains("similarity")) {
    for (const auto& [metric, section] : report["similarity"].items()) {
      out << "Similarity: " << metric << '\n'
          << matrix_text(section.at("variants"), section.at("values")) << '\n';
    }
  }
  if (report.contains("purity")) {
    const auto& p = report["purity"];
    out << "Neighbour variant purity (k=" << p["k"].get<int>() << ", "
        << p["distance"].get<std::string>() << "; rows: query variant)\n"
        << matrix_text(p["variants"], p["confusion"]) << '\n';
  }
  return out.str();
}

}  // namespace repsim
