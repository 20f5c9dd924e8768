#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddk/ddk.hpp"

using namespace ddk;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

PipelineConfig scenario_pipeline_config(const ScenarioConfig& sc) {
    PipelineConfig cfg;
    cfg.num_classes = sc.num_classes;
    cfg.num_superclasses = sc.num_superclasses;
    cfg.pool_grid = sc.pool_grid;
    cfg.score_floor = 0.25;
    cfg.top_k = 100;
    return cfg;
}

}  // namespace

TEST_CASE("scenario generation is deterministic") {
    ScenarioConfig cfg;
    cfg.seed = 42;
    cfg.num_objects = 4;
    const Scenario a = generate_scenario(cfg);
    const Scenario b = generate_scenario(cfg);
    CHECK(a.detection_map.data == b.detection_map.data);
    CHECK(a.regression_map.data == b.regression_map.data);
    CHECK(a.classification_map.data == b.classification_map.data);
    REQUIRE(a.objects.size() == b.objects.size());
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
        CHECK(a.objects[i].box == b.objects[i].box);
        CHECK(a.objects[i].class_id == b.objects[i].class_id);
    }
}

TEST_CASE("object placement is independent of K and P") {
    ScenarioConfig cfg;
    cfg.seed = 97;
    cfg.num_objects = 5;
    cfg.num_superclasses = 1;
    const Scenario k1 = generate_scenario(cfg);
    cfg.num_superclasses = 5;
    cfg.pool_grid = 3;
    const Scenario k5 = generate_scenario(cfg);
    REQUIRE(k1.objects.size() == k5.objects.size());
    for (std::size_t i = 0; i < k1.objects.size(); ++i) {
        CHECK(k1.objects[i].box == k5.objects[i].box);
        CHECK(k1.objects[i].class_id == k5.objects[i].class_id);
    }
    CHECK(k1.rois.size() == k5.rois.size());
}

TEST_CASE("empty scene yields nothing above a 0.5 floor") {
    ScenarioConfig cfg;
    cfg.seed = 7;
    cfg.num_objects = 0;
    const Scenario sc = generate_scenario(cfg);
    PipelineConfig pc = scenario_pipeline_config(cfg);
    pc.score_floor = 0.5;
    const auto dets = detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                   sc.taxonomy, cfg.extent, pc);
    CHECK(dets.empty());
}

TEST_CASE("single object with K=1 is recovered above IoU 0.7") {
    ScenarioConfig cfg;
    cfg.seed = 11;
    cfg.num_objects = 1;
    cfg.num_superclasses = 1;
    const Scenario sc = generate_scenario(cfg);
    const auto dets = detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                   sc.taxonomy, cfg.extent, scenario_pipeline_config(cfg));
    REQUIRE(!dets.empty());
    CHECK(dets[0].class_id == sc.objects[0].class_id);
    CHECK(iou(dets[0].box, sc.objects[0].box) >= 0.7);
}

TEST_CASE("the anchor RoI decodes exactly back to the planted box") {
    ScenarioConfig cfg;
    cfg.seed = 23;
    cfg.num_objects = 3;
    cfg.num_superclasses = 2;
    const Scenario sc = generate_scenario(cfg);
    const HeadConfig head = scenario_head_config(sc);
    for (std::size_t obj = 0; obj < sc.objects.size(); ++obj) {
        const RoIScores s = score_roi(sc.detection_map, sc.regression_map, sc.classification_map,
                                      sc.anchors[obj], head);
        const BBox refined = decode(s.deltas, sc.anchors[obj], cfg.extent);
        CHECK(iou(refined, sc.objects[obj].box) > 0.999);
        // The planted class outranks every other class at its own box.
        int argmax = 0;
        for (int c = 1; c < cfg.num_classes; ++c)
            if (s.final_scores[c] > s.final_scores[argmax]) argmax = c;
        CHECK(argmax == sc.objects[obj].class_id);
    }
}

TEST_CASE("detect honors floor and top-k and nms-mode equivalence") {
    ScenarioConfig cfg;
    cfg.seed = 31;
    cfg.num_objects = 5;
    const Scenario sc = generate_scenario(cfg);
    PipelineConfig pc = scenario_pipeline_config(cfg);
    pc.top_k = 3;
    const auto dets = detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                   sc.taxonomy, cfg.extent, pc);
    CHECK(dets.size() <= 3);
    for (const auto& d : dets) CHECK(d.score >= pc.score_floor);

    // Clustered mode with M = C equals per-class mode.
    PipelineConfig per_class = scenario_pipeline_config(cfg);
    PipelineConfig clustered = per_class;
    clustered.nms_mode = NmsMode::Clustered;
    clustered.nms_clusters = cfg.num_classes;
    const auto a = detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                sc.taxonomy, cfg.extent, per_class);
    const auto b = detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                sc.taxonomy, cfg.extent, clustered);
    CHECK(a == b);
}

TEST_CASE("detect results do not depend on the thread count") {
    ScenarioConfig cfg;
    cfg.seed = 37;
    cfg.num_objects = 4;
    const Scenario sc = generate_scenario(cfg);
    PipelineConfig one = scenario_pipeline_config(cfg);
    one.threads = 1;
    PipelineConfig many = scenario_pipeline_config(cfg);
    many.threads = 8;
    const auto a = detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                sc.taxonomy, cfg.extent, one);
    const auto b = detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                sc.taxonomy, cfg.extent, many);
    CHECK(a == b);
}

TEST_CASE("K sweep runs without channel errors") {
    for (int k : {1, 5, 25, 100}) {
        ScenarioConfig cfg;
        cfg.seed = 41;
        cfg.num_classes = 100;
        cfg.num_superclasses = k;
        cfg.num_objects = 2;
        cfg.pool_grid = 3;
        const Scenario sc = generate_scenario(cfg);
        const auto dets = detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                       sc.taxonomy, cfg.extent, scenario_pipeline_config(cfg));
        CHECK(dets.size() >= 1);
    }
}

TEST_CASE("end-to-end mAP on a small scenario set") {
    std::vector<std::vector<Detection>> dets;
    std::vector<std::vector<GroundTruth>> gts;
    for (int img = 0; img < 3; ++img) {
        ScenarioConfig cfg;
        cfg.seed = 100 + img;
        cfg.num_objects = 5;
        cfg.num_superclasses = 5;
        const Scenario sc = generate_scenario(cfg);
        dets.push_back(detect_image(sc.detection_map, sc.regression_map, sc.classification_map, sc.rois,
                                    sc.taxonomy, cfg.extent, scenario_pipeline_config(cfg)));
        gts.push_back(sc.objects);
    }
    const EvalReport r = mean_ap(dets, gts, EvalConfig{});
    CHECK(r.map >= 0.95);
}

TEST_CASE("scenario files round-trip and regenerate identically") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "ddk_scn_test").string();
    fs::remove_all(dir);

    ScenarioConfig cfg;
    cfg.seed = 55;
    cfg.num_objects = 3;
    const Scenario sc = generate_scenario(cfg);
    write_scenario(sc, dir);

    const Tensor det = read_tensor(dir + "/detection.ddk1");
    CHECK(det.dims[0] == static_cast<std::uint32_t>((cfg.num_superclasses + 1) * cfg.pool_grid * cfg.pool_grid));
    CHECK(det.data == sc.detection_map.data);

    const Taxonomy tax = load_taxonomy(dir + "/taxonomy.json");
    CHECK(tax.assignment == sc.taxonomy.assignment);

    const auto gts = read_ground_truth(dir + "/groundtruth.jsonl");
    REQUIRE(gts.size() == sc.objects.size());
    CHECK(gts[0].box == sc.objects[0].box);

    const auto rois = read_boxes(dir + "/rois.jsonl");
    CHECK(rois.size() == sc.rois.size());

    // Writing the same scenario twice produces byte-identical files.
    const std::string dir2 = (fs::temp_directory_path() / "ddk_scn_test2").string();
    fs::remove_all(dir2);
    write_scenario(generate_scenario(cfg), dir2);
    CHECK(slurp(dir + "/detection.ddk1") == slurp(dir2 + "/detection.ddk1"));
    CHECK(slurp(dir + "/groundtruth.jsonl") == slurp(dir2 + "/groundtruth.jsonl"));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("two-scale merge improves nothing on clean scenes but stays correct") {
    ScenarioConfig cfg;
    cfg.seed = 61;
    cfg.num_objects = 3;
    const Scenario sc = generate_scenario(cfg);
    const RenderedMaps fine = render_scenario_maps(sc.config, sc.taxonomy, sc.objects, sc.anchors,
                                                   cfg.stride / 2.0, 999);
    const PipelineConfig pc = scenario_pipeline_config(cfg);
    const auto coarse_dets = detect_image(sc.detection_map, sc.regression_map, sc.classification_map,
                                          sc.rois, sc.taxonomy, cfg.extent, pc);
    const auto fine_dets = detect_image(fine.detection, fine.regression, fine.classification, sc.rois,
                                        sc.taxonomy, cfg.extent, pc);
    const auto merged = topk_filter(multiscale_merge(coarse_dets, fine_dets, pc.nms_iou), pc.top_k,
                                    pc.score_floor);
    const EvalReport r = mean_ap(merged, sc.objects, EvalConfig{});
    CHECK(r.map >= 0.95);
}

TEST_CASE("scenario rejects impossible densities") {
    ScenarioConfig cfg;
    cfg.seed = 3;
    cfg.num_objects = 200;  // cannot fit 200 disjoint padded regions
    CHECK_THROWS_WITH(generate_scenario(cfg), Catch::Matchers::ContainsSubstring("density"));
}

TEST_CASE("detections file round-trip and parse errors name the line") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "ddk_dets_test.jsonl").string();
    const std::vector<Detection> dets = {{BBox(1, 2, 3, 4), 7, 0.5}, {BBox(0, 0, 9, 9), 0, 0.25}};
    write_detections(path, dets);
    CHECK(read_detections(path) == dets);

    std::ofstream os(path, std::ios::app);
    os << "{not json\n";
    os.close();
    CHECK_THROWS_WITH(read_detections(path), Catch::Matchers::ContainsSubstring("line 3"));
    fs::remove(path);
}
