#include "repsim/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "repsim/digest.hpp"
#include "repsim/error.hpp"
#include "repsim/feature_store.hpp"
#include "repsim/linear_probe.hpp"
#include "repsim/neighbors.hpp"
#include "repsim/random.hpp"
#include "repsim/report.hpp"
#include "repsim/run_metadata.hpp"
#include "repsim/simmetrics.hpp"
#include "repsim/variant_gen.hpp"

namespace repsim::cli {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  fs::path out = path;
  out.replace_extension();
  out += suffix;
  return out;
}

ojson recorded_flags(const CLI::App& sub) {
  ojson flags = ojson::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    if (opt->get_expected_max() == 0) {
      flags[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      std::string joined;
      for (std::size_t i = 0; i < results.size(); ++i) joined += (i ? "," : "") + results[i];
      flags[name] = joined;
    } else {
      flags[name] = opt->get_default_str();
    }
  }
  return flags;
}

RunMetadata start_metadata(const CLI::App& sub) {
  RunMetadata meta;
  meta.subcommand = sub.get_name();
  meta.flags = recorded_flags(sub);
  return meta;
}

void attach_manifest(RunMetadata& meta, const LoadedManifest& loaded) {
  meta.manifest_digest = loaded.digest;
  meta.input_digests.insert(loaded.file_digests.begin(), loaded.file_digests.end());
}

std::vector<std::uint8_t> parse_fill(const std::string& text) {
  std::vector<std::uint8_t> fill;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    int value = -1;
    try {
      std::size_t used = 0;
      value = std::stoi(part, &used);
      if (used != part.size()) value = -1;
    } catch (const std::exception&) {
      value = -1;
    }
    if (value < 0 || value > 255) {
      throw ValidationError("--fill expects 0-255 values, got '" + part + "'");
    }
    fill.push_back(static_cast<std::uint8_t>(value));
  }
  if (fill.size() != 1 && fill.size() != 3) {
    throw ValidationError("--fill expects one value or R,G,B");
  }
  return fill;
}

std::vector<FeatureMatrix> subsample(const std::vector<FeatureMatrix>& matrices,
                                     std::size_t max_samples, std::uint64_t seed) {
  const std::size_t n = matrices.front().rows();
  if (max_samples == 0 || max_samples >= n) return matrices;
  const auto rows = sample_indices(n, max_samples, seed);
  std::vector<FeatureMatrix> out;
  out.reserve(matrices.size());
  for (const auto& m : matrices) out.push_back(m.select_rows(rows));
  return out;
}

struct Options {
  // variants
  fs::path input_dir, output_dir, mask_dir;
  std::string kind = "circular";
  double radius_fraction = 0.5;
  std::string fill = "0";
  // shared
  fs::path manifest, out;
  std::uint64_t seed = 17;
  std::size_t max_samples = 0;
  // similarity
  bool l2_normalize = false;
  std::string kernel = "linear";
  double bandwidth = 1.0;
  // probe
  int folds = 5;
  double l2 = 1e-4;
  int max_iterations = 500;
  double tol = 1e-6;
  // neighbours
  int k = 5;
  std::string distance = "euclidean";
  double fraction = 0.1;
  // report
  fs::path probe_path, cca_path, cka_path, purity_path, text_out;
};

int run_variants(const CLI::App& sub, const Options& o, std::ostream& out) {
  const Stopwatch clock;
  RunMetadata meta = start_metadata(sub);
  PipelineOptions p;
  p.input_dir = o.input_dir;
  p.output_dir = o.output_dir;
  p.mask_dir = o.mask_dir;
  p.spec.kind = o.kind == "segmentation" ? MaskKind::Segmentation : MaskKind::Circular;
  p.spec.radius_fraction = o.radius_fraction;
  p.spec.fill = parse_fill(o.fill);
  if (p.spec.kind == MaskKind::Segmentation && o.mask_dir.empty()) {
    throw ValidationError("--kind segmentation requires --masks");
  }
  const PipelineSummary summary = run_variant_pipeline(p);

  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(o.input_dir, ec)) {
    if (entry.is_regular_file()) {
      meta.input_digests[entry.path().string()] = sha256_file(entry.path());
    }
  }
  const fs::path summary_path = o.output_dir / "summary.json";
  std::ifstream in(summary_path);
  ojson doc = ojson::parse(in);
  in.close();
  meta.wall_time_seconds = clock.seconds();
  doc["metadata"] = to_json(meta);
  write_text(summary_path, doc.dump(2) + "\n");

  out << "processed=" << summary.processed << " skipped=" << summary.skipped
      << " errors=" << summary.errors << '\n';
  return kExitOk;
}

int run_similarity(const CLI::App& sub, const Options& o, Metric metric, std::ostream& out) {
  const Stopwatch clock;
  RunMetadata meta = start_metadata(sub);
  meta.seed = o.seed;
  const LoadedManifest loaded = load_manifest(o.manifest);
  attach_manifest(meta, loaded);

  SimilarityOptions options;
  options.metric = metric;
  options.rbf_bandwidth = o.bandwidth;
  options.l2_normalize = o.l2_normalize;
  options.max_samples = o.max_samples;
  options.seed = o.seed;
  const SimilarityMatrix matrix = similarity_matrix(loaded.matrices, options);

  const std::string csv = similarity_to_csv(matrix);
  write_text(with_suffix(o.out, ".csv"), csv);
  meta.wall_time_seconds = clock.seconds();
  write_text(with_suffix(o.out, ".json"), similarity_to_json(matrix, options, meta).dump(2) + "\n");
  out << csv;
  if (matrix.ill_conditioned) {
    std::cerr << "warning: canonical correlations needed clamping beyond " << kClampWarning
              << "; inputs are ill-conditioned\n";
  }
  return kExitOk;
}

int run_probe_cmd(const CLI::App& sub, const Options& o, std::ostream& out) {
  const Stopwatch clock;
  RunMetadata meta = start_metadata(sub);
  meta.seed = o.seed;
  const LoadedManifest loaded = load_manifest(o.manifest);
  attach_manifest(meta, loaded);

  ProbeConfig config;
  config.n_folds = o.folds;
  config.l2_penalty = o.l2;
  config.max_iterations = o.max_iterations;
  config.convergence_tol = o.tol;
  config.seed = o.seed;
  const ProbeReport report = run_probe(loaded.matrices, config, loaded.manifest.model_name,
                                       loaded.manifest.dataset_name);
  meta.wall_time_seconds = clock.seconds();
  write_text(o.out, probe_to_json(report, meta).dump(2) + "\n");
  out << probe_table(report);
  for (const auto& [variant, score] : report.per_variant) {
    const auto failed = std::count(score.converged.begin(), score.converged.end(), false);
    if (failed > 0) {
      std::cerr << "warning: " << variant_name(variant) << ": " << failed
                << " fold(s) hit --max-iter before converging\n";
    }
  }
  return kExitOk;
}

int run_purity(const CLI::App& sub, const Options& o, std::ostream& out) {
  const Stopwatch clock;
  RunMetadata meta = start_metadata(sub);
  meta.seed = o.seed;
  const LoadedManifest loaded = load_manifest(o.manifest);
  attach_manifest(meta, loaded);
  if (o.distance != "euclidean" && o.distance != "cosine") {
    throw ValidationError("unknown distance '" + o.distance + "'");
  }
  const Distance distance = o.distance == "cosine" ? Distance::Cosine : Distance::Euclidean;
  const auto matrices = subsample(loaded.matrices, o.max_samples, o.seed);
  const PurityReport report = knn_variant_purity(matrices, o.k, distance);
  meta.wall_time_seconds = clock.seconds();
  write_text(o.out, purity_to_json(report, meta).dump(2) + "\n");

  std::ostringstream csv;
  csv << "variant";
  for (const Variant v : report.variants) csv << ',' << variant_name(v);
  csv << '\n';
  char buf[32];
  for (std::size_t i = 0; i < report.variants.size(); ++i) {
    csv << variant_name(report.variants[i]);
    for (std::size_t j = 0; j < report.variants.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g",
                    report.confusion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      csv << ',' << buf;
    }
    csv << '\n';
  }
  write_text(with_suffix(o.out, ".csv"), csv.str());
  for (std::size_t i = 0; i < report.variants.size(); ++i) {
    out << variant_name(report.variants[i]) << ' ' << report.per_variant[i] << '\n';
  }
  return kExitOk;
}

int run_project(const CLI::App& sub, const Options& o, std::ostream& out) {
  const Stopwatch clock;
  RunMetadata meta = start_metadata(sub);
  meta.seed = o.seed;
  const LoadedManifest loaded = load_manifest(o.manifest);
  attach_manifest(meta, loaded);
  const Projection projection = project_2d(loaded.matrices, o.fraction, o.seed);

  std::ostringstream csv;
  csv << "x,y,variant,sample_id\n";
  char buf[64];
  std::vector<std::string> raw_ids;
  for (const auto& p : projection.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", p.x, p.y);
    csv << buf << ',' << variant_name(p.variant) << ',' << p.sample_id << '\n';
    raw_ids.push_back(std::string(variant_name(p.variant)) + ":" + p.sample_id);
  }
  write_text(with_suffix(o.out, ".csv"), csv.str());

  const FeatureMatrix raw(projection.raw.cast<float>(), raw_ids, projection.labels);
  write_features(raw, with_suffix(o.out, ".raw.npy"));

  ojson doc;
  doc["kind"] = "projection";
  doc["method"] = "pca";
  doc["points"] = projection.points.size();
  doc["fraction"] = o.fraction;
  doc["points_csv"] = with_suffix(o.out, ".csv").filename().string();
  doc["raw_features"] = with_suffix(o.out, ".raw.npy").filename().string();
  meta.wall_time_seconds = clock.seconds();
  doc["metadata"] = to_json(meta);
  write_text(with_suffix(o.out, ".json"), doc.dump(2) + "\n");
  out << "projected " << projection.points.size() << " points\n";
  return kExitOk;
}

int run_report(const CLI::App& sub, const Options& o, std::ostream& out) {
  const Stopwatch clock;
  RunMetadata meta = start_metadata(sub);
  std::vector<Artifact> artifacts;
  for (const auto* path : {&o.probe_path, &o.cca_path, &o.cka_path, &o.purity_path}) {
    if (path->empty()) continue;
    artifacts.push_back(load_artifact(*path));
    meta.input_digests[artifacts.back().source.string()] = sha256_file(artifacts.back().source);
  }
  ojson report = build_report(artifacts);
  meta.manifest_digest = report["manifest_digest"].get<std::string>();
  const std::string text = render_report_text(report);
  meta.wall_time_seconds = clock.seconds();
  report["metadata"] = to_json(meta);
  if (!o.out.empty()) write_text(o.out, report.dump(2) + "\n");
  if (!o.text_out.empty()) write_text(o.text_out, text);
  out << text;
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"repsim: robustness analysis of learned representations under masking", "repsim"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string(toolkit_version()));
  Options o;

  auto* variants = app.add_subcommand("variants", "Generate masked image variants");
  variants->add_option("--input", o.input_dir, "Directory of PNG/JPEG images")->required();
  variants->add_option("--output", o.output_dir, "Output directory")->required();
  variants->add_option("--kind", o.kind, "Mask family")
      ->check(CLI::IsMember({"circular", "segmentation"}));
  variants->add_option("--radius-fraction", o.radius_fraction,
                       "Circle radius as a fraction of min(H,W)/2");
  variants->add_option("--fill", o.fill, "Fill value: V or R,G,B");
  variants->add_option("--masks", o.mask_dir, "Directory of <stem>.png segmentation masks");

  auto add_manifest = [&](CLI::App* sub) {
    sub->add_option("--manifest", o.manifest, "Variant manifest JSON")->required();
  };

  auto* cca = app.add_subcommand("cca", "Mean squared CCA correlation matrix");
  auto* cka = app.add_subcommand("cka", "CKA similarity matrix");
  for (auto* sub : {cca, cka}) {
    add_manifest(sub);
    sub->add_option("--out", o.out, "Output CSV (a .json twin is written alongside)")->required();
    sub->add_flag("--l2-normalize", o.l2_normalize, "Scale every embedding to unit norm first");
    sub->add_option("--max-samples", o.max_samples, "Seeded subsample size (0 = all)");
    sub->add_option("--seed", o.seed, "Subsampling seed");
  }
  cka->add_option("--kernel", o.kernel, "Kernel")->check(CLI::IsMember({"linear", "rbf"}));
  cka->add_option("--bandwidth", o.bandwidth, "RBF sigma as a fraction of the median distance");

  auto* probe = app.add_subcommand("probe", "k-fold linear probe with balanced accuracy");
  add_manifest(probe);
  probe->add_option("--folds", o.folds, "Number of folds");
  probe->add_option("--seed", o.seed, "Fold assignment seed");
  probe->add_option("--l2", o.l2, "L2 penalty on weights");
  probe->add_option("--max-iter", o.max_iterations, "L-BFGS iteration cap");
  probe->add_option("--tol", o.tol, "Gradient-norm convergence tolerance");
  probe->add_option("--out", o.out, "Output JSON")->required();

  auto* purity = app.add_subcommand("knn-purity", "Variant purity of k-nearest neighbourhoods");
  add_manifest(purity);
  purity->add_option("--k", o.k, "Neighbours per point");
  purity->add_option("--distance", o.distance, "Distance")
      ->check(CLI::IsMember({"euclidean", "cosine"}));
  purity->add_option("--max-samples", o.max_samples, "Seeded per-variant subsample (0 = all)");
  purity->add_option("--seed", o.seed, "Subsampling seed");
  purity->add_option("--out", o.out, "Output JSON (a .csv confusion matrix is written alongside)")
      ->required();

  auto* project = app.add_subcommand("project", "2-D PCA projection of a pooled subsample");
  add_manifest(project);
  project->add_option("--fraction", o.fraction, "Fraction of samples per variant");
  project->add_option("--seed", o.seed, "Subsampling seed");
  project->add_option("--out", o.out, "Output points CSV")->required();

  auto* report = app.add_subcommand("report", "Merge analysis artifacts into one report");
  report->add_option("--probe", o.probe_path, "probe JSON");
  report->add_option("--cca", o.cca_path, "CCA CSV or JSON");
  report->add_option("--cka", o.cka_path, "CKA CSV or JSON");
  report->add_option("--purity", o.purity_path, "knn-purity JSON");
  report->add_option("--out", o.out, "Merged JSON report");
  report->add_option("--text", o.text_out, "Plain-text report");

  if (args.empty()) {
    err << app.help();
    return kExitValidation;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::Sub);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << toolkit_version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    if (sub == variants) return run_variants(*sub, o, out);
    if (sub == cca) return run_similarity(*sub, o, Metric::CcaR2, out);
    if (sub == cka) {
      return run_similarity(*sub, o, o.kernel == "rbf" ? Metric::CkaRbf : Metric::CkaLinear, out);
    }
    if (sub == probe) return run_probe_cmd(*sub, o, out);
    if (sub == purity) return run_purity(*sub, o, out);
    if (sub == project) return run_project(*sub, o, out);
    if (sub == report) return run_report(*sub, o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace repsim::cli
