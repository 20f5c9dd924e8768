#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddk/nms.hpp"
#include "ddk/targets.hpp"

namespace ddk {

// Detections as JSON-lines: {"box":[x1,y1,x2,y2],"class":c,"score":s}
// Ground truth as JSON-lines:  {"box":[x1,y1,x2,y2],"class":c}

namespace detail {

inline nlohmann::json parse_line(const std::string& line, const std::string& name, std::size_t line_no) {
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
        throw std::runtime_error(name + ": malformed JSON at line " + std::to_string(line_no));
    }
}

inline BBox box_from_json(const nlohmann::json& j, const std::string& name, std::size_t line_no) {
    if (!j.is_array() || j.size() != 4)
        throw std::runtime_error(name + ": \"box\" must be [x1,y1,x2,y2] at line " + std::to_string(line_no));
    BBox b(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
    if (!b.valid())
        throw std::runtime_error(name + ": invalid box at line " + std::to_string(line_no));
    return b;
}

}  // namespace detail

inline void write_detections(std::ostream& os, const std::vector<Detection>& dets) {
    for (const auto& d : dets) {
        nlohmann::json j{{"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                         {"class", d.class_id},
                         {"score", d.score}};
        os << j.dump() << "\n";
    }
}

inline void write_detections(const std::string& path, const std::vector<Detection>& dets) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_detections: cannot open " + path);
    write_detections(os, dets);
}

inline std::vector<Detection> read_detections(std::istream& is, const std::string& name = "<stream>") {
    std::vector<Detection> dets;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const nlohmann::json j = detail::parse_line(line, name, line_no);
        if (!j.contains("box") || !j.contains("class") || !j.contains("score"))
            throw std::runtime_error(name + ": missing box/class/score field at line " + std::to_string(line_no));
        Detection d;
        d.box = detail::box_from_json(j["box"], name, line_no);
        d.class_id = j["class"].get<int>();
        d.score = j["score"].get<double>();
        dets.push_back(d);
    }
    return dets;
}

inline std::vector<Detection> read_detections(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_detections: cannot open " + path);
    return read_detections(is, path);
}

inline void write_ground_truth(std::ostream& os, const std::vector<GroundTruth>& gts) {
    for (const auto& g : gts) {
        nlohmann::json j{{"box", {g.box.x1, g.box.y1, g.box.x2, g.box.y2}}, {"class", g.class_id}};
        os << j.dump() << "\n";
    }
}

inline void write_ground_truth(const std::string& path, const std::vector<GroundTruth>& gts) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_ground_truth: cannot open " + path);
    write_ground_truth(os, gts);
}

inline std::vector<GroundTruth> read_ground_truth(std::istream& is, const std::string& name = "<stream>") {
    std::vector<GroundTruth> gts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const nlohmann::json j = detail::parse_line(line, name, line_no);
        if (!j.contains("box") || !j.contains("class"))
            throw std::runtime_error(name + ": missing box/class field at line " + std::to_string(line_no));
        GroundTruth g;
        g.box = detail::box_from_json(j["box"], name, line_no);
        g.class_id = j["class"].get<int>();
        gts.push_back(g);
    }
    return gts;
}

inline std::vector<GroundTruth> read_ground_truth(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_ground_truth: cannot open " + path);
    return read_ground_truth(is, path);
}

// Boxes alone as JSON-lines: {"box":[x1,y1,x2,y2]} — used for RoI and anchor files.
inline void write_boxes(const std::string& path, const std::vector<BBox>& boxes) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_boxes: cannot open " + path);
    for (const auto& b : boxes) {
        nlohmann::json j{{"box", {b.x1, b.y1, b.x2, b.y2}}};
        os << j.dump() << "\n";
    }
}

inline std::vector<BBox> read_boxes(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_boxes: cannot open " + path);
    std::vector<BBox> boxes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const nlohmann::json j = detail::parse_line(line, path, line_no);
        if (!j.contains("box"))
            throw std::runtime_error(path + ": missing box field at line " + std::to_string(line_no));
        boxes.push_back(detail::box_from_json(j["box"], path, line_no));
    }
    return boxes;
}

}  // namespace ddk
