#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatlens/morphology.hpp"
#include "heatlens/weights.hpp"

namespace heatlens {

// Version string recorded in run manifests.
extern const char* const kVersion;

// Typed run configuration. The file format is documented key = value lines
// grouped by [section]; parsing rejects unknown keys and names missing
// required ones. All input paths are resolved against the config file's
// directory and must exist at validation time. Every parameter except the
// input paths and the seed has a default.
//
//   [inputs]  dsm, cdsm, landcover, bands, lst, zones, meteo, socio
//   [site]    latitude, longitude
//   [params]  seed (required), utci_hour, weights, permutations, alpha
//   [svf]     n_directions, max_radius_m, observer_height_m,
//             transmissivity, radial_substeps
//   [gw]      features, kernel_candidates, target, signed_feature,
//             color_feature, n_knots
//   [fit]     n_estimators, learning_rate, subsample, depths,
//             min_child_weight
//   [output]  dir
//
// The dsm carries surface height above ground (0 on open ground) and the
// cdsm carries canopy height above the dsm, so building height equals the
// dsm value.
struct PipelineConfig {
    std::string dsm;
    std::string cdsm;
    std::string landcover;
    std::string bands;
    std::string lst;
    std::string zones;
    std::string meteo;
    std::string socio;

    double latitude = 0.0;
    double longitude = 0.0;

    uint64_t seed = 0;
    int utci_hour = 11;
    WeightScheme weights = WeightScheme::QueenNnHybrid;
    int permutations = 199;
    double alpha = 0.05;

    SvfOptions svf;

    std::vector<std::string> features = {"SVF_mean", "NDVI_mean", "NDBI_mean",
                                         "ALB_mean", "BH_mean", "BD"};
    std::vector<int> kernel_candidates = {12, 16, 24};
    std::string target = "UTCI_mean";
    std::string signed_feature = "SVF_mean";
    std::string color_feature = "ALB_mean";
    int n_knots = 8;

    int n_estimators = 150;
    double learning_rate = 0.1;
    double subsample = 0.8;
    std::vector<int> depths = {1, 2, 3};
    double min_child_weight = 1.0;

    std::string out_dir = "out";
    std::string config_path;  // absolute; set by validate_config
};

PipelineConfig validate_config(const std::string& path);

// Runs the full chain on one config:
//
//   features  read inputs, spectral indices, morphometrics, landscape
//             structure, socio-economic join          -> grids/*.asc
//   svf       sky view factors                        -> grids/svf*.asc
//   utci      shadows, six-directional fluxes, Tmrt and UTCI averaged over
//             the meteo samples at utci_hour          -> grids/tmrt.asc,
//                                                        grids/utci.asc
//   zonal     zone table with |z(LST)-z(UTCI)| and tercile bivariate
//             classes                                 -> features.csv,
//                                                        zonal.csv
//   moran     global Moran and LISA of the mismatch   -> moran.csv, lisa.csv
//   gwr       bandwidth search and local regression   -> gwr.csv,
//                                                        gwr_bandwidth.csv
//   fit       nested cross-validation and the global boosted model
//                                                     -> nested_cv.csv,
//                                                        global_model.json
//   gwfit     leave-one-out bandwidth, local models, residual diagnostics
//                                                     -> bandwidth_trace.csv,
//                                                        gw/, metrics.csv
//   shap      global attribution summary and per-zone primary drivers
//                                                     -> shap_summary.csv,
//                                                        shap_dependence_*.csv,
//                                                        local_primary.csv
//   gam       attribution-vs-value curves and their first sign changes
//                                                     -> transition_points.csv
//
// A manifest.json naming every file read and written (FNV-1a content
// hashes), the seed, and the tool version is written last. On a stage
// failure the error names the stage and cause, and every file this run had
// written is renamed to <name>.partial. Outputs are a pure function of
// (inputs, config, seed); thread count never changes results. Every
// stochastic stage draws from its own substream of the seed.
void run_pipeline(const PipelineConfig& cfg, int threads = 0);

}  // namespace heatlens
