#include <CLI11.hpp>

#include <rfsvm/harness.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rfsvm::Error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

rfsvm::LabelColumn label_column(const std::string& name, int index) {
  if (index >= 0) return static_cast<rfsvm::Index>(index);
  return name;
}

void print_summary(const rfsvm::ExperimentResults& results, const rfsvm::Report& report) {
  std::cout << std::fixed << std::setprecision(3);
  for (const auto& r : results.results) {
    std::cout << r.dataset << '\t' << rfsvm::to_string(r.method) << '\t';
    if (r.ok) std::cout << r.mean_accuracy << " +- " << r.std_accuracy << '\n';
    else std::cout << "absent\n";
  }
  if (report.global.friedman) {
    const auto& f = *report.global.friedman;
    std::cout << "friedman chi2 " << f.statistic << " p " << f.p_value << " cd " << f.cd << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-forest similarity kernels for SVMs on HDLSS data"};
  app.require_subcommand(1);

  std::filesystem::path config_path, output_dir, results_dir, dataset_path;
  std::string label = "label";
  int label_index = -1;
  std::uint64_t seed = 0;
  std::string kind = "rf";
  double gamma = 1.0;
  rfsvm::Index trees = 500;
  rfsvm::Index samples = 50000;

  auto* run = app.add_subcommand("run", "Run an experiment config and write a results directory");
  run->add_option("-c,--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", output_dir, "Output directory (overrides the config)");
  run->add_option("--bayes-samples", samples, "Monte Carlo draws per Bayesian sign test");

  auto* prof = app.add_subcommand("profile", "Print n, m, c, imbalance ratio, omega and band of a dataset");
  prof->add_option("-d,--dataset", dataset_path, "CSV file")->required()->check(CLI::ExistingFile);
  prof->add_option("-l,--label", label, "Label column name");
  prof->add_option("--label-index", label_index, "Label column index (overrides --label)");

  auto* rep = app.add_subcommand("report", "Rebuild the report bundle from results.json");
  rep->add_option("-r,--results", results_dir, "Results directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--bayes-samples", samples, "Monte Carlo draws per Bayesian sign test");
  rep->add_option("--seed", seed, "Seed for the Bayesian sign tests");

  auto* val = app.add_subcommand("validate-kernel", "Build a train kernel and check its properties");
  val->add_option("-d,--dataset", dataset_path, "CSV file")->required()->check(CLI::ExistingFile);
  val->add_option("-s,--seed", seed, "Forest seed");
  val->add_option("-k,--kind", kind, "rf, cosine or rbf")->check(CLI::IsMember({"rf", "cosine", "rbf"}));
  val->add_option("-g,--gamma", gamma, "RBF width");
  val->add_option("-t,--trees", trees, "Trees in the forest");
  val->add_option("-l,--label", label, "Label column name");
  val->add_option("--label-index", label_index, "Label column index (overrides --label)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = rfsvm::load_config(config_path);
      if (!output_dir.empty()) config.output_dir = output_dir;
      const auto results = rfsvm::run_experiment(config);
      rfsvm::ReportOptions options;
      options.samples = samples;
      options.seed = config.seed;
      const auto report = rfsvm::assemble_report(results, options);
      rfsvm::write_report_bundle(results, report, config.output_dir);
      std::ofstream(config.output_dir / "config.json") << rfsvm::config_to_json(config);
      print_summary(results, report);
      std::cout << "wrote " << config.output_dir.string() << '\n';
    } else if (*prof) {
      const auto data = rfsvm::load_csv(dataset_path, label_column(label, label_index));
      const auto p = rfsvm::profile(data);
      std::cout << "dataset " << data.name() << "\nn " << data.n() << "\nm " << data.m() << "\nc "
                << data.c() << "\nclass_counts";
      for (auto count : data.class_counts()) std::cout << ' ' << count;
      std::cout << std::fixed << std::setprecision(3) << "\nimbalance_ratio " << p.imbalance_ratio
                << "\nomega " << p.omega << "\nband " << rfsvm::to_string(p.band) << '\n';
    } else if (*rep) {
      const auto results = rfsvm::results_from_json(read_file(results_dir / "results.json"));
      rfsvm::ReportOptions options;
      options.samples = samples;
      options.seed = seed;
      if (std::filesystem::exists(results_dir / "config.json"))
        options.seed = rfsvm::config_from_json(read_file(results_dir / "config.json")).seed;
      const auto report = rfsvm::assemble_report(results, options);
      rfsvm::write_report_bundle(results, report, results_dir);
      print_summary(results, report);
    } else if (*val) {
      const auto data = rfsvm::load_csv(dataset_path, label_column(label, label_index));
      rfsvm::IndexList all(data.n());
      std::iota(all.begin(), all.end(), rfsvm::Index{0});
      rfsvm::KernelMatrix k;
      switch (rfsvm::kernel_kind_from_string(kind)) {
        case rfsvm::KernelKind::rf: {
          rfsvm::ForestHyperparams hp;
          hp.n_trees = trees;
          k = rfsvm::rf_kernel_train(rfsvm::fit_forest(data, all, hp, seed), data, all);
          break;
        }
        case rfsvm::KernelKind::cosine: k = rfsvm::cosine_kernel(data, all, all); break;
        case rfsvm::KernelKind::rbf: k = rfsvm::rbf_kernel(data, all, all, gamma); break;
      }
      const auto v = rfsvm::validate_kernel(k);
      std::cout << std::scientific << std::setprecision(3) << "kernel " << kind << " " << k.rows()
                << "x" << k.cols() << "\nmax_asymmetry " << v.max_asymmetry << "\nmin_eigenvalue "
                << v.min_eigenvalue << "\nmax_diagonal_deviation " << v.max_diagonal_deviation
                << "\nsymmetric " << v.symmetric << "\npositive_semidefinite " << v.positive_semidefinite
                << "\nunit_diagonal " << v.unit_diagonal << "\nstatus " << (v.ok() ? "ok" : "FAILED")
                << '\n';
      return v.ok() ? 0 : 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
