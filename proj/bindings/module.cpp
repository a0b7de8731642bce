#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tap/can.hpp"
#include "tap/core.hpp"
#include "tap/cpn.hpp"
#include "tap/eval.hpp"
#include "tap/io.hpp"
#include "tap/pipeline.hpp"
#include "tap/quantize.hpp"
#include "tap/retrieval.hpp"
#include "tap/synth.hpp"
#include "tap/tubelet.hpp"

namespace py = pybind11;

namespace {

tap::quantize::FeatureMap make_map(const std::vector<double>& values,
                                   std::uint32_t width, std::uint32_t height,
                                   std::uint32_t channels) {
  tap::quantize::FeatureMap map;
  map.width = width;
  map.height = height;
  map.channels = channels;
  map.values = values;
  tap::quantize::validate_feature_map(map);
  return map;
}

}  // namespace

PYBIND11_MODULE(_tapkit, m) {
  m.doc() = "temporal action proposal toolkit";

  py::register_exception<tap::Error>(m, "TapError");

  py::enum_<tap::Stage>(m, "Stage")
      .value("CPN", tap::Stage::CPN)
      .value("CAN", tap::Stage::CAN)
      .value("PRN", tap::Stage::PRN)
      .value("FUSED", tap::Stage::FUSED);

  py::class_<tap::TemporalSegment>(m, "TemporalSegment")
      .def(py::init([](double start, double end) {
             tap::TemporalSegment s{start, end};
             tap::validate_segment(s);
             return s;
           }),
           py::arg("start"), py::arg("end"))
      .def_readonly("start", &tap::TemporalSegment::start)
      .def_readonly("end", &tap::TemporalSegment::end)
      .def("length", &tap::TemporalSegment::length)
      .def("__repr__", [](const tap::TemporalSegment& s) {
        return "TemporalSegment(" + std::to_string(s.start) + ", " +
               std::to_string(s.end) + ")";
      });

  py::class_<tap::Proposal>(m, "Proposal")
      .def(py::init([](const std::string& video_id, double start, double end,
                       double score, tap::Stage stage) {
             tap::Proposal p{video_id, {start, end}, score, stage, {}};
             tap::validate_proposal(p);
             return p;
           }),
           py::arg("video_id"), py::arg("start"), py::arg("end"),
           py::arg("score"), py::arg("stage") = tap::Stage::CPN)
      .def_readonly("video_id", &tap::Proposal::video_id)
      .def_readonly("segment", &tap::Proposal::segment)
      .def_readonly("score", &tap::Proposal::score)
      .def_readonly("stage", &tap::Proposal::stage);

  py::class_<tap::GroundTruthSet>(m, "GroundTruthSet")
      .def("total_annotations", &tap::GroundTruthSet::total_annotations)
      .def("video_ids", [](const tap::GroundTruthSet& gt) {
        std::vector<std::string> ids;
        for (const auto& [id, video] : gt.videos) ids.push_back(id);
        return ids;
      });

  py::class_<tap::eval::ArAnCurve>(m, "ArAnCurve")
      .def_readonly("an_grid", &tap::eval::ArAnCurve::an_grid)
      .def_readonly("ar_values", &tap::eval::ArAnCurve::ar_values)
      .def_readonly("auc", &tap::eval::ArAnCurve::auc);

  m.def("tiou", &tap::eval::tiou, "temporal IoU of two segments");
  m.def(
      "tiou",
      [](double a0, double a1, double b0, double b1) {
        return tap::eval::tiou({a0, a1}, {b0, b1});
      },
      "temporal IoU of [a0,a1) and [b0,b1)");

  m.def("load_ground_truth",
        [](const std::string& path) { return tap::parse_ground_truth(path); });
  m.def("load_proposals",
        [](const std::string& path) { return tap::read_proposals(path); });
  m.def("evaluate_proposals",
        [](const std::vector<tap::Proposal>& proposals,
           const tap::GroundTruthSet& gt) {
          return tap::eval::evaluate_proposals(proposals, gt);
        });

  m.def("average_pool", [](const std::vector<std::vector<double>>& features) {
    return tap::quantize::average_pool(features);
  });
  m.def(
      "count_sketch",
      [](const std::vector<double>& x, std::uint32_t sketch_dim,
         std::uint64_t seed) {
        const auto params = tap::quantize::make_sketch_params(
            seed, static_cast<std::uint32_t>(x.size()), sketch_dim);
        return tap::quantize::count_sketch(x, params);
      },
      py::arg("x"), py::arg("sketch_dim"), py::arg("seed") = 1);
  m.def(
      "compact_bilinear_pool",
      [](const std::vector<double>& values, std::uint32_t width,
         std::uint32_t height, std::uint32_t channels, std::uint32_t sketch_dim,
         std::uint64_t seed, bool normalize) {
        const auto map = make_map(values, width, height, channels);
        const auto params =
            tap::quantize::make_sketch_params(seed, channels, sketch_dim);
        tap::quantize::CbpOptions options;
        options.normalize = normalize;
        return tap::quantize::compact_bilinear_pool(map, params, options);
      },
      py::arg("values"), py::arg("width"), py::arg("height"),
      py::arg("channels"), py::arg("sketch_dim"), py::arg("seed") = 1,
      py::arg("normalize") = true);

  m.def(
      "watershed_tag",
      [](const std::vector<double>& fused, double fps,
         const std::string& video_id) {
        return tap::cpn::watershed_tag(fused, fps, tap::cpn::TagConfig{},
                                       video_id);
      },
      py::arg("fused"), py::arg("fps"), py::arg("video_id") = "video");
  m.def(
      "fuse_actionness",
      [](const std::vector<double>& point, const std::vector<double>& pair,
         const std::vector<double>& recurrent, double w_point, double w_pair,
         double w_recurrent) {
        tap::ActionnessCurveSet curves{"video", 1.0, point, pair, recurrent};
        return tap::cpn::fuse_actionness(curves,
                                         {w_point, w_pair, w_recurrent});
      },
      py::arg("point"), py::arg("pair"), py::arg("recurrent"),
      py::arg("w_point") = 1.0 / 3, py::arg("w_pair") = 1.0 / 3,
      py::arg("w_recurrent") = 1.0 / 3);

  m.def("nms", &tap::pipeline::nms, py::arg("proposals"),
        py::arg("tiou_threshold"));

  m.def(
      "box_iou",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != 4 || b.size() != 4) {
          throw tap::ValidationError("boxes are [x1, y1, x2, y2]");
        }
        return tap::tubelet::box_iou({a[0], a[1], a[2], a[3]},
                                     {b[0], b[1], b[2], b[3]});
      },
      "IoU of two [x1, y1, x2, y2] boxes");

  m.def(
      "lexical_similarity",
      [](const std::string& a, const std::string& b) {
        return tap::retrieval::lexical_similarity(tap::retrieval::tokenize(a),
                                                  tap::retrieval::tokenize(b));
      },
      "mean unigram/bigram F1 of two sentences");
  m.def(
      "consensus_rerank",
      [](const std::vector<std::string>& candidates) {
        std::vector<std::vector<std::string>> tokenized;
        tokenized.reserve(candidates.size());
        for (const auto& c : candidates) {
          tokenized.push_back(tap::retrieval::tokenize(c));
        }
        const auto result = tap::retrieval::consensus_rerank(tokenized);
        return py::make_tuple(candidates[result.index], result.score);
      },
      "returns (most consensual caption, score)");

  m.def(
      "encode_deltas",
      [](double anchor_center, double anchor_length, double gt_start,
         double gt_end) {
        const double gc = 0.5 * (gt_start + gt_end);
        const double gl = gt_end - gt_start;
        return py::make_tuple((gc - anchor_center) / anchor_length,
                              std::log(gl / anchor_length));
      },
      "regression targets (dc, dl) of an anchor against a segment");
  m.def(
      "decode_deltas",
      [](double anchor_center, double anchor_length, double dc, double dl,
         double duration) -> py::object {
        tap::can::Anchor a{anchor_center, anchor_length, 0, 0, 0};
        const auto seg = tap::can::decode_one(a, dc, dl, duration);
        if (!seg) return py::none();
        return py::make_tuple(seg->start, seg->end);
      },
      "applies (dc, dl) to an anchor, clipped to [0, duration]");
}
