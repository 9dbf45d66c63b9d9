// cyclecount: command-line front end for the cyclecount library.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cyclecount/cohort.hpp"
#include "cyclecount/complexity_stats.hpp"
#include "cyclecount/harmonic_glm.hpp"
#include "cyclecount/ingest.hpp"
#include "cyclecount/report.hpp"
#include "cyclecount/synth.hpp"
#include "cyclecount/timeseries.hpp"

namespace cc = cyclecount;
using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw cc::IoError("cannot open " + path);
  return in;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cc::IoError("cannot write " + path);
  out << text;
  if (!out) throw cc::IoError("write failed for " + path);
}

json malformed_json(const std::vector<cc::MalformedRow>& rows) {
  json a = json::array();
  for (const auto& m : rows) a.push_back({{"line", m.line}, {"field", m.field}, {"reason", m.reason}});
  return a;
}

void warn_malformed(const std::vector<cc::MalformedRow>& rows) {
  for (const auto& m : rows) std::cerr << "warning: line " << m.line << " (" << m.field << "): " << m.reason << "\n";
}

cc::PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? cc::PipelineConfig{} : cc::load_pipeline_config(path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cyclic arrival-count modelling, cohort scoring and case-complexity statistics"};
  app.require_subcommand(1);

  // cleanse
  std::string cl_in, cl_config, cl_out, cl_report;
  auto* cleanse_cmd = app.add_subcommand("cleanse", "Parse visits and apply the cleansing rules");
  cleanse_cmd->add_option("--in", cl_in, "Visit CSV")->required();
  cleanse_cmd->add_option("--config", cl_config, "Pipeline config JSON");
  cleanse_cmd->add_option("--out", cl_out, "Cleansed visit CSV")->required();
  cleanse_cmd->add_option("--report", cl_report, "Cleansing report JSON");

  // score
  std::string sc_in, sc_hfrs, sc_charlson, sc_out, sc_config;
  auto* score_cmd = app.add_subcommand("score", "Compute HFRS/Charlson scores and frailty labels");
  score_cmd->add_option("--in", sc_in, "Cleansed visit CSV")->required();
  score_cmd->add_option("--hfrs-table", sc_hfrs, "HFRS weight table JSON");
  score_cmd->add_option("--charlson-table", sc_charlson, "Charlson weight table JSON");
  score_cmd->add_option("--out", sc_out, "Scored visit CSV")->required();
  score_cmd->add_option("--config", sc_config, "Pipeline config JSON (thresholds, default tables)");

  // bin
  std::string bn_in, bn_out, bn_rates, bn_config;
  auto* bin_cmd = app.add_subcommand("bin", "Hourly counts per group and the 168-slot rate table");
  bin_cmd->add_option("--in", bn_in, "Scored visit CSV")->required();
  bin_cmd->add_option("--out", bn_out, "Counts CSV")->required();
  bin_cmd->add_option("--rates", bn_rates, "Rate table CSV (default: <out>.rates.csv)");
  bin_cmd->add_option("--config", bn_config, "Pipeline config JSON (study period)");

  // fit
  std::string ft_counts, ft_out, ft_baseline_group;
  int ft_kw = 3, ft_kd = 7;
  bool ft_interaction = false, ft_select = false;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the harmonic Poisson model to hourly counts");
  fit_cmd->add_option("--counts", ft_counts, "Counts CSV from `bin`")->required();
  fit_cmd->add_option("--kw", ft_kw, "Weekly harmonics (0-3)");
  fit_cmd->add_option("--kd", ft_kd, "Daily harmonics (0-12)");
  fit_cmd->add_flag("--interaction", ft_interaction, "Add the frail interaction series");
  fit_cmd->add_flag("--select-orders", ft_select, "Choose K_w, K_d by AIC over the full grid");
  fit_cmd->add_option("--baseline-group", ft_baseline_group, "Fit a single group only (frail|non-frail)");
  fit_cmd->add_option("--out", ft_out, "Model JSON (default stdout)");

  // compare
  std::string cp_a, cp_b, cp_out;
  auto* compare_cmd = app.add_subcommand("compare", "Nested-model deviance test");
  compare_cmd->add_option("--model-a", cp_a, "Smaller model JSON")->required();
  compare_cmd->add_option("--model-b", cp_b, "Larger model JSON")->required();
  compare_cmd->add_option("--out", cp_out, "ANOVA JSON (default stdout)");

  // complexity
  std::string cx_in, cx_by = "cohort", cx_measures = "admitted,triage,charlson,los", cx_subset, cx_out, cx_config;
  double cx_tau = 600.0;
  auto* complexity_cmd = app.add_subcommand("complexity", "Case-complexity tests between two groups");
  complexity_cmd->add_option("--in", cx_in, "Scored visit CSV")->required();
  complexity_cmd->add_option("--by", cx_by, "cohort | gp_hours");
  complexity_cmd->add_option("--measures", cx_measures, "Comma list of admitted,triage,charlson,los");
  complexity_cmd->add_option("--tau", cx_tau, "RMST horizon in minutes");
  complexity_cmd->add_option("--subset", cx_subset, "gp_hours only: all | frail | non-frail (default frail)");
  complexity_cmd->add_option("--config", cx_config, "Pipeline config JSON (GP hours)");
  complexity_cmd->add_option("--out", cx_out, "Result JSON (default stdout)");

  // simulate
  std::string sm_config, sm_out;
  std::optional<std::uint64_t> sm_seed;
  auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic visit CSV");
  simulate_cmd->add_option("--config", sm_config, "Generator config JSON")->required();
  simulate_cmd->add_option("--seed", sm_seed, "Seed (overrides the config)");
  simulate_cmd->add_option("--out", sm_out, "Visit CSV")->required();

  // validate
  std::string vd_config, vd_out;
  std::size_t vd_replicates = 100;
  std::optional<std::uint64_t> vd_seed;
  bool vd_no_select = false;
  auto* validate_cmd = app.add_subcommand("validate", "Seeded recovery experiment");
  validate_cmd->add_option("--config", vd_config, "Generator config JSON")->required();
  validate_cmd->add_option("--replicates", vd_replicates, "Number of replicates");
  validate_cmd->add_option("--seed", vd_seed, "Base seed (overrides the config)");
  validate_cmd->add_flag("--no-select-orders", vd_no_select, "Skip the AIC grid per replicate");
  validate_cmd->add_option("--out", vd_out, "Coverage JSON (default stdout)");

  // run
  std::string rn_in, rn_config, rn_out_dir;
  bool rn_svg = false, rn_no_csv = false;
  auto* run_cmd = app.add_subcommand("run", "Full pipeline with report emission");
  run_cmd->add_option("--in", rn_in, "Raw visit CSV")->required();
  run_cmd->add_option("--config", rn_config, "Pipeline config JSON");
  run_cmd->add_option("--out-dir", rn_out_dir, "Output directory")->required();
  run_cmd->add_flag("--svg", rn_svg, "Also write SVG charts");
  run_cmd->add_flag("--no-csv", rn_no_csv, "Skip per-table CSV files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cleanse_cmd) {
      const auto cfg = config_or_default(cl_config);
      auto in = open_in(cl_in);
      const auto parsed = cc::parse_visits(in, cfg.schema);
      warn_malformed(parsed.malformed);
      const auto [kept, rep] = cc::cleanse(parsed.records, cfg.cleanse);
      std::ostringstream csv;
      cc::write_visits(csv, kept);
      json j{{"input_count", rep.input_count},
             {"retained_count", rep.retained_count},
             {"removed_by_rule", rep.removed_by_rule},
             {"rule_order", rep.rule_order},
             {"malformed", malformed_json(parsed.malformed)}};
      write_text(cl_out, csv.str());
      if (!cl_report.empty()) write_text(cl_report, j.dump(2) + "\n");
      std::cerr << "retained " << rep.retained_count << " of " << rep.input_count << " parsed rows\n";
    } else if (*score_cmd) {
      const auto cfg = config_or_default(sc_config);
      const auto hfrs = cc::WeightTable::load(sc_hfrs.empty() ? cfg.hfrs_table : sc_hfrs);
      const auto charlson = cc::WeightTable::load(sc_charlson.empty() ? cfg.charlson_table : sc_charlson);
      auto in = open_in(sc_in);
      const auto parsed = cc::parse_visits(in, cfg.schema);
      warn_malformed(parsed.malformed);
      std::ostringstream csv;
      cc::write_scored(csv, cc::score_visits(parsed.records, hfrs, charlson, cfg.cohort));
      write_text(sc_out, csv.str());
    } else if (*bin_cmd) {
      const auto cfg = config_or_default(bn_config);
      auto in = open_in(bn_in);
      const auto parsed = cc::read_scored(in, cfg.schema);
      warn_malformed(parsed.malformed);
      const auto series = cfg.study_period ? cc::bin_hourly(parsed.visits, *cfg.study_period) : cc::bin_hourly(parsed.visits);
      std::ostringstream counts, rates;
      cc::write_counts(counts, series);
      const auto w = series.non_frail.slot_occurrences();
      std::array<std::array<double, cc::kSlotsPerWeek>, 2> rho{};
      for (int g = 0; g < 2; ++g)
        if (series[static_cast<cc::Group>(g)].total > 0) rho[g] = cc::normalized_rates(series[static_cast<cc::Group>(g)]);
      cc::csv::write_row(rates, {"slot_index", "day", "hour", "occurrences", "rho_non_frail", "rho_frail"});
      for (int s = 0; s < cc::kSlotsPerWeek; ++s) {
        const auto slot = cc::WeekSlot::from_index(s);
        char a[32], b[32];
        std::snprintf(a, sizeof a, "%.17g", rho[0][static_cast<std::size_t>(s)]);
        std::snprintf(b, sizeof b, "%.17g", rho[1][static_cast<std::size_t>(s)]);
        cc::csv::write_row(rates, {std::to_string(s), std::to_string(slot.day), std::to_string(slot.hour),
                                   std::to_string(w[static_cast<std::size_t>(s)]), a, b});
      }
      write_text(bn_out, counts.str());
      write_text(bn_rates.empty() ? bn_out + ".rates.csv" : bn_rates, rates.str());
    } else if (*fit_cmd) {
      auto in = open_in(ft_counts);
      const auto series = cc::read_counts(in);
      cc::DesignOptions opt;
      if (!ft_baseline_group.empty()) opt.only_group = cc::parse_group(ft_baseline_group);
      cc::FourierSpec spec{ft_kw, ft_kd, ft_interaction};
      json sel = nullptr;
      if (ft_select) {
        const auto s = cc::select_orders(series, {}, opt);
        spec.weekly = s.weekly;
        spec.daily = s.daily;
        sel = cc::to_json(s);
      }
      const auto m = cc::fit_model(series, spec, opt);
      auto j = cc::to_json(m);
      if (!sel.is_null()) j["order_selection"] = sel;
      write_text(ft_out, j.dump(2) + "\n");
      if (!m.converged) std::cerr << "warning: IRLS did not converge in " << m.iterations << " iterations\n";
    } else if (*compare_cmd) {
      auto a = open_in(cp_a), b = open_in(cp_b);
      json ja, jb;
      a >> ja;
      b >> jb;
      const auto r = cc::anova_nested(cc::model_from_json(ja), cc::model_from_json(jb));
      write_text(cp_out, cc::to_json(r).dump(2) + "\n");
    } else if (*complexity_cmd) {
      const auto cfg = config_or_default(cx_config);
      auto in = open_in(cx_in);
      const auto parsed = cc::read_scored(in, cfg.schema);
      warn_malformed(parsed.malformed);
      cc::ComplexityOptions opt;
      opt.by = cc::parse_comparison(cx_by);
      opt.measures = split_list(cx_measures);
      opt.tau = cx_tau;
      opt.gp_hours = cfg.gp_hours;
      opt.gp_subset = cx_subset.empty() ? cfg.gp_subset : cc::parse_subset(cx_subset);
      json out = json::array();
      for (const auto& t : cc::compare_complexity(parsed.visits, opt)) out.push_back(cc::to_json(t));
      write_text(cx_out, out.dump(2) + "\n");
    } else if (*simulate_cmd) {
      auto cfg = cc::load_generator_config(sm_config);
      const auto visits = cc::simulate_arrivals(cfg, sm_seed.value_or(cfg.seed));
      std::ostringstream csv;
      cc::write_simulated(csv, visits);
      write_text(sm_out, csv.str());
    } else if (*validate_cmd) {
      auto cfg = cc::load_generator_config(vd_config);
      if (vd_seed) cfg.seed = *vd_seed;
      cc::RecoveryOptions opt;
      opt.select_orders = !vd_no_select;
      const auto rep = cc::recovery_experiment(cfg, vd_replicates, opt);
      write_text(vd_out, cc::to_json(rep).dump(2) + "\n");
    } else if (*run_cmd) {
      const auto cfg = config_or_default(rn_config);
      auto in = open_in(rn_in);
      const auto rep = cc::run_pipeline(in, cfg);
      auto files = cc::render_report(rep, {!rn_no_csv, rn_svg});
      // The wall-clock stamp lives only in the metadata block.
      auto j = json::parse(files["report.json"]);
      const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      char stamp[32];
      std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
      j["metadata"]["generated_at"] = stamp;
      files["report.json"] = j.dump(2) + "\n";
      cc::write_files(rn_out_dir, files);
      std::cerr << "wrote " << files.size() << " files to " << rn_out_dir << "\n";
    }
  } catch (const cc::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cc::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
