#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvsuq/evaluation.hpp"
#include "mvsuq/fusion.hpp"
#include "mvsuq/uncertainty.hpp"

namespace mvsuq {

// Run-wide knobs with the module defaults. The worker count is deliberately
// not configuration: outputs must not depend on it, so it travels as a
// separate runtime argument and sgm.threads is overridden per run.
struct PipelineConfig {
  int n_neighbors = 10;
  int k_consistency = 2;
  double eps_rel = 0.01;
  SgmParams sgm;
  int d_range_margin = 4;
  double tilt_threshold_deg = 20;

  double uq_bin_size = 1000;
  int uq_min_samples = 200;
  int uq_min_rays = 6;
  double uq_self_gate_px = 1.0;

  double split_threshold = 0.5;  // m, low/high error split in reports
  double angle_bin_deg = 5;
  bool icp = false;  // align to the reference before scoring
  int icp_max_iters = 50;
  double icp_conv_tol = 1e-6;
  uint64_t neighbor_seed = 0x5eed;
};

bool operator==(const PipelineConfig& a, const PipelineConfig& b);
inline bool operator!=(const PipelineConfig& a, const PipelineConfig& b) { return !(a == b); }

// Canonical JSON snapshot, keys sorted; parse(serialize(c)) == c.
std::string serialize_config(const PipelineConfig& config);
// Missing keys keep their defaults; unknown keys or bad types are ConfigError.
PipelineConfig parse_config(const std::string& text);

struct BasePairs {
  int base_id = -1;
  NeighborSet neighbors;
  std::vector<PairDepthMap> maps;  // kept pairs; index order defines pair_mask bits
  std::vector<PairRejection> rejected;
};

std::vector<BasePairs> stage_match(const PipelineConfig& config,
                                   const std::vector<CameraView>& views, int threads);

struct FuseOutput {
  std::vector<FusionResult> per_base;  // aligned with the match result
  PointCloud merged;                   // concatenation in base order
  std::vector<size_t> offsets;         // merged row offset of each base
};

FuseOutput stage_fuse(const PipelineConfig& config, const std::vector<CameraView>& views,
                      const std::vector<BasePairs>& matches, int threads);

// Per-pair stereo clouds back-projected from the pair depth maps; the
// median_angle_deg column carries each point's intersection angle and
// dim_energy the matcher energy at its pixel.
std::vector<StereoPairCloud> pair_clouds(const std::vector<CameraView>& views,
                                         const std::vector<BasePairs>& matches,
                                         double tilt_threshold_deg);

struct EvalOutput {
  bool icp_applied = false;
  IcpResult icp;
  MeanStd overall;  // nearest-reference distance over the merged cloud
  BinnedErrorStats by_rays, by_angle, by_energy;
  OlsFit energy_fit;  // binned MAE vs energy-bin center
  size_t low_count = 0, high_count = 0;
  Histogram low_angles, high_angles;
  PairCompositionStats compositions;
};

// Fills error_m on the merged cloud. With config.icp errors are measured
// after rigidly aligning copies to the reference; the stored clouds keep
// the camera frame so they remain reprojectable.
EvalOutput stage_evaluate(const PipelineConfig& config, FuseOutput& fuse,
                          const std::vector<StereoPairCloud>& pairs,
                          const PointCloud& reference, int threads);

struct UqOutput {
  UqTable table;
  size_t pseudo_gt_points = 0;
  size_t sample_count = 0;
  bool low_count = false;  // pseudo ground truth thinner than 1000 points
};

UqOutput stage_fit_uq(const PipelineConfig& config, const std::vector<CameraView>& views,
                      const std::vector<BasePairs>& matches, const FuseOutput& fuse,
                      int threads);

// Writes predicted_error_mean/std into the per-base clouds and the matching
// merged rows.
void stage_annotate(const UqTable& table, const std::vector<BasePairs>& matches,
                    FuseOutput& fuse);

std::string uq_table_json(const UqTable& table);
UqTable parse_uq_table(const std::string& text);

struct PipelineResult {
  PipelineConfig config;
  std::vector<BasePairs> bases;
  FuseOutput fuse;
  std::optional<EvalOutput> eval;
  std::optional<UqOutput> uq;
  std::vector<std::string> written;  // out_dir-relative paths
};

// match -> fuse -> merge -> evaluate (when a reference is given) -> fit-uq
// -> annotate -> report. A non-empty out_dir receives every artifact plus
// the config snapshot and a content-hash index; reruns with the same config
// and inputs are byte-identical at any worker count. Stage failures carry
// the stage name and the offending image id.
PipelineResult run_pipeline(const PipelineConfig& config, const std::vector<CameraView>& views,
                            const PointCloud* reference, const std::string& out_dir,
                            int threads = 1);

// Fig-analog report tables; reference-dependent ones are skipped when the
// cloud has no error column. Returns the files written (out_dir-relative).
std::vector<std::string> write_reports(const PipelineConfig& config, const PointCloud& merged,
                                       const std::optional<EvalOutput>& eval,
                                       const std::string& out_dir);

// Directory round-trip for staged CLI runs: match results on disk.
void save_match(const std::string& out_dir, const std::string& manifest_path,
                const PipelineConfig& config, const std::vector<BasePairs>& matches,
                std::vector<std::string>* written = nullptr);
std::vector<BasePairs> load_match(const std::string& dir, std::vector<CameraView>& views,
                                  PipelineConfig* config = nullptr);

// FNV-1a content hashes of the listed files, written to <dir>/hashes.json.
void write_hashes(const std::string& dir, std::vector<std::string> files);

}  // namespace mvsuq
