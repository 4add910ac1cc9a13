// xmflow command-line tool.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

#include "xmflow/io.hpp"
#include "xmflow/pipeline.hpp"

namespace {

using namespace xmflow;

int exit_code_for(const Error& e) { return e.kind() == ErrorKind::Io ? 2 : 1; }

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<double> train_frac;

  PipelineConfig resolve() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
    if (seed) cfg.seed = *seed;
    if (tau) cfg.trim.tau_percent = *tau;
    if (train_frac) cfg.train_frac = *train_frac;
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic flow supervision, consistency flows and cross-modal flow benchmarks"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Pipeline config file (JSON)");

  unsigned workers = std::max(1u, std::thread::hardware_concurrency());

  std::string manifest, out, rig, pred, gt, report, flow_path, target, mask_path;
  double max_mag = 0.0;

  auto* synth = app.add_subcommand("synthesize", "Render novel views and synthetic flow labels");
  synth->add_option("--manifest", manifest)->required();
  synth->add_option("--out", out)->required();
  synth->add_option("--seed", common.seed);
  synth->add_option("--workers", workers);

  auto* gtcmd = app.add_subcommand("gt-from-lidar", "Project LiDAR into a camera pair for sparse GT flow");
  gtcmd->add_option("--manifest", manifest)->required();
  gtcmd->add_option("--rig", rig)->required();
  gtcmd->add_option("--out", out)->required();
  gtcmd->add_option("--workers", workers);

  auto* eval = app.add_subcommand("evaluate", "Score predictions on the test split (EPE, F1)");
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--pred", pred)->required();
  eval->add_option("--gt", gt)->required();
  eval->add_option("--report", report)->required();
  eval->add_option("--train-frac", common.train_frac);

  auto* loss = app.add_subcommand("loss", "Masked and trimmed L1 flow loss between two flow files");
  loss->add_option("--pred", pred)->required();
  loss->add_option("--target", target)->required();
  loss->add_option("--mask", mask_path);
  loss->add_option("--tau", common.tau);

  auto* viz = app.add_subcommand("viz", "Color-code a flow file");
  viz->add_option("--flow", flow_path)->required();
  viz->add_option("--out", out)->required();
  viz->add_option("--max-magnitude", max_mag, "Saturation normalisation (0: per-image maximum)");

  auto* split = app.add_subcommand("split", "Report the per-sequence train/test split");
  split->add_option("--manifest", manifest)->required();
  split->add_option("--train-frac", common.train_frac);

  auto* defaults = app.add_subcommand("config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const PipelineConfig cfg = common.resolve();

    if (*defaults) {
      std::cout << serialize_config(cfg);
    } else if (*synth) {
      const SynthesizeSummary s = run_synthesize(load_manifest(manifest), out, cfg, workers);
      std::cout << "wrote " << s.written << " triplets\n";
      for (const auto& f : s.failures) std::cerr << "failed " << f.key << ": " << f.message << "\n";
      if (!s.failures.empty()) return 1;
    } else if (*gtcmd) {
      const GtSummary s = run_gt_from_lidar(load_manifest(manifest), load_rig(rig), out, cfg, workers);
      std::cout << "wrote " << s.written << " ground-truth frames\n";
      for (const auto& w : s.warnings) std::cerr << "warning " << w.key << ": " << w.message << "\n";
    } else if (*eval) {
      const EvaluationReport rep = run_evaluate(load_manifest(manifest), pred, gt, cfg);
      write_text(report, format_report_jsonl(rep));
      std::cout << format_report_table(rep);
      for (const auto& s : rep.skipped) std::cerr << "skipped " << s.key << ": " << s.message << "\n";
    } else if (*loss) {
      const FlowField p = read_flo(pred);
      const FlowField t = read_flo(target);
      if (p.width() != t.width() || p.height() != t.height())
        fail(ErrorKind::InvalidInput, "prediction and target sizes differ");
      Mask m(p.width(), p.height(), false);
      if (!mask_path.empty()) {
        m = read_mask_png(mask_path);
        if (!m.same_shape(p.width(), p.height())) fail(ErrorKind::InvalidInput, "mask size differs");
      }
      for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = (mask_path.empty() || m[i]) && p.valid[i] && t.valid[i] ? 1 : 0;
      const TrimmedLoss tl = trimmed_flow_loss(p, t, m, cfg.trim);
      std::cout.precision(17);
      std::cout << "masked_l1 " << masked_flow_loss(p, t, m) << "\n"
                << "trimmed_l1 " << tl.value << "\n"
                << "tau_percent " << cfg.trim.tau_percent << "\n"
                << "valid_pixels " << m.count() << "\n"
                << "kept_pixels " << tl.kept.count() << "\n";
    } else if (*viz) {
      write_png(out, flow_to_color(read_flo(flow_path), max_mag), 8);
    } else if (*split) {
      const SplitReport rep = split_manifest(load_manifest(manifest, false), cfg.train_frac);
      for (const auto& s : rep.sequences)
        std::cout << s.id << " train " << s.split.train.size() << " test " << s.split.test.size() << "\n";
      std::cout << "total train " << rep.train_total << " test " << rep.test_total << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
