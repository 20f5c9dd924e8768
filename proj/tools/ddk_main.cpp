// ddk — command-line front end for the decoupled detection pipeline.
//
// Subcommands: cluster, simulate, detect, nms-bench, eval, loss-check.
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddk/ddk.hpp"

namespace {

struct ClusterArgs {
    std::string features;
    std::string output = "taxonomy.json";
    int k = 1;
    std::uint64_t seed = 1;
    int max_iters = 100;
};

void run_cluster(const ClusterArgs& a) {
    const ddk::Tensor t = ddk::read_tensor(a.features);
    if (t.dims.size() != 2)
        throw std::runtime_error(a.features + ": expected a rank-2 tensor of shape C x D, got rank " +
                                 std::to_string(t.dims.size()));
    const int c_num = static_cast<int>(t.dims[0]);
    const int dim = static_cast<int>(t.dims[1]);
    std::vector<ddk::ClassRepresentation> reps;
    reps.reserve(c_num);
    for (int c = 0; c < c_num; ++c) {
        std::vector<double> v(dim);
        for (int d = 0; d < dim; ++d) v[d] = t.data[static_cast<std::size_t>(c) * dim + d];
        reps.push_back({c, std::move(v)});
    }
    const ddk::Taxonomy tax = ddk::build_taxonomy(reps, a.k, a.seed);
    ddk::save_taxonomy(a.output, tax);
    std::cout << "wrote " << a.output << " (C=" << tax.num_classes << ", K=" << tax.num_superclasses << ")\n";
}

struct SimulateArgs {
    std::string output_dir = "scenario";
    ddk::ScenarioConfig cfg;
    int width = 640;
    int height = 480;
    bool two_scale = false;
};

void run_simulate(SimulateArgs& a) {
    a.cfg.extent = ddk::ImageExtent(a.width, a.height);
    const ddk::Scenario sc = ddk::generate_scenario(a.cfg);
    ddk::write_scenario(sc, a.output_dir, a.two_scale);
    std::cout << "wrote scenario to " << a.output_dir << " (" << sc.objects.size() << " objects, "
              << sc.rois.size() << " rois)\n";
}

struct DetectArgs {
    std::string dir;
    std::string detection_map, regression_map, classification_map, taxonomy, rois;
    std::string output = "detections.jsonl";
    double stride = 16.0;
    int width = 0, height = 0;
    int pool_grid = 7;
    std::string nms_mode = "per-class";
    ddk::PipelineConfig cfg;
    bool two_scale = false;
};

// Scenario directories carry a manifest with the geometry; explicit flags
// override individual entries.
void apply_manifest(DetectArgs& a) {
    if (a.dir.empty()) return;
    std::ifstream is(a.dir + "/scenario.json");
    if (!is) throw std::runtime_error(a.dir + "/scenario.json: cannot open manifest");
    nlohmann::json m;
    is >> m;
    a.stride = m.at("stride").get<double>();
    a.width = m.at("width").get<int>();
    a.height = m.at("height").get<int>();
    a.pool_grid = m.at("P").get<int>();
    a.cfg.num_classes = m.at("C").get<int>();
    a.cfg.num_superclasses = m.at("K").get<int>();
    if (a.detection_map.empty()) a.detection_map = a.dir + "/detection.ddk1";
    if (a.regression_map.empty()) a.regression_map = a.dir + "/regression.ddk1";
    if (a.classification_map.empty()) a.classification_map = a.dir + "/classification.ddk1";
    if (a.taxonomy.empty()) a.taxonomy = a.dir + "/taxonomy.json";
    if (a.rois.empty()) a.rois = a.dir + "/rois.jsonl";
}

void run_detect(DetectArgs& a) {
    apply_manifest(a);
    if (a.detection_map.empty() || a.regression_map.empty() || a.classification_map.empty() ||
        a.taxonomy.empty() || a.rois.empty())
        throw std::runtime_error("detect: need --dir or explicit map/taxonomy/roi paths");
    if (a.width <= 0 || a.height <= 0) throw std::runtime_error("detect: image extent is not set");

    const ddk::ImageExtent extent(a.width, a.height);
    const ddk::Taxonomy tax = ddk::load_taxonomy(a.taxonomy);
    a.cfg.num_classes = tax.num_classes;
    a.cfg.num_superclasses = tax.num_superclasses;
    a.cfg.pool_grid = a.pool_grid;
    a.cfg.nms_mode = ddk::nms_mode_from_string(a.nms_mode);

    const auto det = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.detection_map), a.stride, a.detection_map);
    const auto reg = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.regression_map), a.stride, a.regression_map);
    const auto cls = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.classification_map), a.stride,
                                                  a.classification_map);
    const std::vector<ddk::BBox> rois = ddk::read_boxes(a.rois);

    std::vector<ddk::Detection> dets = ddk::detect_image(det, reg, cls, rois, tax, extent, a.cfg);

    if (a.two_scale) {
        if (a.dir.empty()) throw std::runtime_error("detect: --two-scale requires --dir");
        const double fine_stride = a.stride / 2.0;
        const auto det2 = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.dir + "/detection2.ddk1"), fine_stride);
        const auto reg2 = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.dir + "/regression2.ddk1"), fine_stride);
        const auto cls2 = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.dir + "/classification2.ddk1"), fine_stride);
        const std::vector<ddk::Detection> dets2 = ddk::detect_image(det2, reg2, cls2, rois, tax, extent, a.cfg);
        dets = ddk::topk_filter(ddk::multiscale_merge(dets, dets2, a.cfg.nms_iou), a.cfg.top_k, a.cfg.score_floor);
    }

    ddk::write_detections(a.output, dets);
    std::cout << "wrote " << dets.size() << " detections to " << a.output << "\n";
}

struct BenchArgs {
    std::size_t detections = 10000;
    int classes = 1000;
    std::vector<int> clusters = {1000, 200, 100, 50, 20};
    int repetitions = 5;
    std::uint64_t seed = 1;
    double iou = 0.3;
    std::string output;  // empty = stdout
};

void run_bench(const BenchArgs& a) {
    std::vector<ddk::BenchRow> rows;
    if (a.detections > 0) {
        const auto workload = ddk::bench_workload(a.seed, a.detections, a.classes);
        rows = ddk::run_nms_benchmark(workload, a.classes, a.clusters, a.repetitions, a.iou);
    }
    const std::string csv = ddk::bench_rows_to_csv(rows);
    if (a.output.empty()) {
        std::cout << csv;
    } else {
        std::ofstream os(a.output);
        if (!os) throw std::runtime_error("nms-bench: cannot open " + a.output);
        os << csv;
        std::cout << "wrote " << a.output << "\n";
    }
}

struct EvalArgs {
    std::vector<std::string> det_files;
    std::vector<std::string> gt_files;
    double iou = 0.5;
    std::string output;  // empty = stdout
};

void run_eval(const EvalArgs& a) {
    if (a.det_files.size() != a.gt_files.size())
        throw std::runtime_error("eval: need one ground-truth file per detections file");
    std::vector<std::vector<ddk::Detection>> dets;
    std::vector<std::vector<ddk::GroundTruth>> gts;
    for (std::size_t i = 0; i < a.det_files.size(); ++i) {
        dets.push_back(ddk::read_detections(a.det_files[i]));
        gts.push_back(ddk::read_ground_truth(a.gt_files[i]));
    }
    ddk::EvalConfig cfg;
    cfg.iou_thresh = a.iou;
    const ddk::EvalReport report = ddk::mean_ap(dets, gts, cfg);
    const std::string body = ddk::eval_report_to_json(report).dump(2) + "\n";
    if (a.output.empty()) {
        std::cout << body;
    } else {
        std::ofstream os(a.output);
        if (!os) throw std::runtime_error("eval: cannot open " + a.output);
        os << body;
        std::cout << "mAP " << report.map << " -> " << a.output << "\n";
    }
}

struct LossCheckArgs {
    std::string dir;
    int batch = 32;
    double w_cls = 0.05;
    double fg_thresh = 0.5;
    std::string output;  // empty = stdout
};

void run_loss_check(const LossCheckArgs& a) {
    std::ifstream is(a.dir + "/scenario.json");
    if (!is) throw std::runtime_error(a.dir + "/scenario.json: cannot open manifest");
    nlohmann::json m;
    is >> m;

    const ddk::ImageExtent extent(m.at("width").get<int>(), m.at("height").get<int>());
    const double stride = m.at("stride").get<double>();
    const ddk::Taxonomy tax = ddk::load_taxonomy(a.dir + "/taxonomy.json");

    ddk::HeadConfig head;
    head.num_classes = tax.num_classes;
    head.num_superclasses = tax.num_superclasses;
    head.pool_grid = m.at("P").get<int>();
    head.taxonomy = tax;

    const auto det = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.dir + "/detection.ddk1"), stride);
    const auto reg = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.dir + "/regression.ddk1"), stride);
    const auto cls = ddk::FeatureMap::from_tensor(ddk::read_tensor(a.dir + "/classification.ddk1"), stride);
    const auto rois = ddk::read_boxes(a.dir + "/rois.jsonl");
    const auto gts = ddk::read_ground_truth(a.dir + "/groundtruth.jsonl");

    const auto scored = ddk::score_rois(det, reg, cls, rois, head, extent);
    std::vector<ddk::RoIScores> predictions;
    predictions.reserve(scored.size());
    for (const auto& s : scored) predictions.push_back(s.scores);

    const ddk::TargetSet targets = ddk::assign_detection_labels(rois, gts, tax, a.fg_thresh);
    const ddk::LossReport report = ddk::total_loss(predictions, targets, a.batch, a.w_cls);

    nlohmann::json j{{"loss", ddk::loss_report_to_json(report)}, {"targets", ddk::target_set_to_json(targets)}};
    const std::string body = j.dump(2) + "\n";
    if (a.output.empty()) {
        std::cout << body;
    } else {
        std::ofstream os(a.output);
        if (!os) throw std::runtime_error("loss-check: cannot open " + a.output);
        os << body;
        std::cout << "total loss " << report.total << " -> " << a.output << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"decoupled detection pipeline: super-class discovery, RoI scoring, NMS, evaluation"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read option defaults from an INI/TOML file");

    ClusterArgs cluster;
    auto* cmd_cluster = app.add_subcommand("cluster", "k-means super-class discovery over a C x D feature tensor");
    cmd_cluster->add_option("--features", cluster.features, "DDK1 tensor of per-class feature vectors (C x D)")
        ->required();
    cmd_cluster->add_option("--k", cluster.k, "number of super-classes")->required();
    cmd_cluster->add_option("--seed", cluster.seed, "PRNG seed");
    cmd_cluster->add_option("--max-iters", cluster.max_iters, "iteration cap");
    cmd_cluster->add_option("--output", cluster.output, "taxonomy JSON path");

    SimulateArgs sim;
    auto* cmd_sim = app.add_subcommand("simulate", "generate a synthetic scenario (maps, rois, ground truth)");
    cmd_sim->add_option("--seed", sim.cfg.seed, "PRNG seed");
    cmd_sim->add_option("--classes", sim.cfg.num_classes, "C");
    cmd_sim->add_option("--superclasses", sim.cfg.num_superclasses, "K");
    cmd_sim->add_option("--pool-grid", sim.cfg.pool_grid, "P");
    cmd_sim->add_option("--objects", sim.cfg.num_objects, "planted objects");
    cmd_sim->add_option("--width", sim.width, "image width");
    cmd_sim->add_option("--height", sim.height, "image height");
    cmd_sim->add_option("--stride", sim.cfg.stride, "feature stride in pixels");
    cmd_sim->add_option("--gap", sim.cfg.gap, "planted logit gap over background");
    cmd_sim->add_option("--noise", sim.cfg.noise_sigma, "map noise sigma");
    cmd_sim->add_option("--rois-per-object", sim.cfg.rois_per_object, "anchor + jittered RoIs per object");
    cmd_sim->add_option("--background-rois", sim.cfg.background_rois, "scattered background RoIs");
    cmd_sim->add_flag("--two-scale", sim.two_scale, "also render maps at half stride");
    cmd_sim->add_option("--output-dir", sim.output_dir, "scenario directory");

    DetectArgs det;
    auto* cmd_detect = app.add_subcommand("detect", "run the detection pipeline over feature maps");
    cmd_detect->add_option("--dir", det.dir, "scenario directory (manifest supplies geometry)");
    cmd_detect->add_option("--detection-map", det.detection_map, "DDK1 tensor, (K+1)*P*P channels");
    cmd_detect->add_option("--regression-map", det.regression_map, "DDK1 tensor, 4*P*P channels");
    cmd_detect->add_option("--classification-map", det.classification_map, "DDK1 tensor, C channels");
    cmd_detect->add_option("--taxonomy", det.taxonomy, "taxonomy JSON");
    cmd_detect->add_option("--rois", det.rois, "JSON-lines RoI boxes");
    cmd_detect->add_option("--stride", det.stride, "feature stride in pixels");
    cmd_detect->add_option("--width", det.width, "image width");
    cmd_detect->add_option("--height", det.height, "image height");
    cmd_detect->add_option("--pool-grid", det.pool_grid, "P");
    cmd_detect->add_option("--nms-mode", det.nms_mode, "per-class | clustered | agnostic");
    cmd_detect->add_option("--nms-clusters", det.cfg.nms_clusters, "M for clustered mode");
    cmd_detect->add_option("--nms-iou", det.cfg.nms_iou, "NMS IoU threshold");
    cmd_detect->add_option("--score-floor", det.cfg.score_floor, "minimum final score");
    cmd_detect->add_option("--top-k", det.cfg.top_k, "detection cap");
    cmd_detect->add_option("--roi-budget", det.cfg.roi_budget, "max RoIs scored");
    cmd_detect->add_option("--threads", det.cfg.threads, "scoring threads (0 = hardware)");
    cmd_detect->add_flag("--two-scale", det.two_scale, "merge with the half-stride map set");
    cmd_detect->add_option("--output", det.output, "detections JSON-lines path");

    BenchArgs bench;
    auto* cmd_bench = app.add_subcommand("nms-bench", "time clustered NMS across cluster counts");
    cmd_bench->add_option("--detections", bench.detections, "synthetic detection count");
    cmd_bench->add_option("--classes", bench.classes, "C");
    cmd_bench->add_option("--clusters", bench.clusters, "cluster counts to sweep")->delimiter(',');
    cmd_bench->add_option("--reps", bench.repetitions, "timed repetitions (median reported)");
    cmd_bench->add_option("--seed", bench.seed, "workload seed");
    cmd_bench->add_option("--iou", bench.iou, "NMS IoU threshold");
    cmd_bench->add_option("--output", bench.output, "CSV path (default stdout)");

    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "VOC-style mAP of detections against ground truth");
    cmd_eval->add_option("--dets", ev.det_files, "detections JSON-lines, one file per image")->required();
    cmd_eval->add_option("--gts", ev.gt_files, "ground-truth JSON-lines, one file per image")->required();
    cmd_eval->add_option("--iou", ev.iou, "matching IoU threshold");
    cmd_eval->add_option("--output", ev.output, "report JSON path (default stdout)");

    LossCheckArgs loss;
    auto* cmd_loss = app.add_subcommand("loss-check", "assign targets on a scenario and report the loss");
    cmd_loss->add_option("--dir", loss.dir, "scenario directory")->required();
    cmd_loss->add_option("--batch", loss.batch, "hard-example batch size B");
    cmd_loss->add_option("--w-cls", loss.w_cls, "classification loss weight");
    cmd_loss->add_option("--fg-thresh", loss.fg_thresh, "foreground IoU threshold");
    cmd_loss->add_option("--output", loss.output, "report JSON path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (cmd_cluster->parsed()) run_cluster(cluster);
        if (cmd_sim->parsed()) run_simulate(sim);
        if (cmd_detect->parsed()) run_detect(det);
        if (cmd_bench->parsed()) run_bench(bench);
        if (cmd_eval->parsed()) run_eval(ev);
        if (cmd_loss->parsed()) run_loss_check(loss);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
