// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dpose/config.hpp"
#include "dpose/error.hpp"
#include "dpose/selfcheck.hpp"
#include "dpose/train.hpp"

namespace py = pybind11;
using namespace dpose;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <class T>
py::array_t<T> to_numpy(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  const auto d = t.data();
  return to_numpy(std::vector<double>(d.begin(), d.end()), shape);
}

Tensor from_numpy(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from_vector(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<double> flat(const Array& a) { return {a.data(), a.data() + a.size()}; }

}  // namespace

PYBIND11_MODULE(_dpose, m) {
  m.doc() = "dpose native module";
  static py::exception<Error> error(m, "DposeError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (e.kind() + ": " + e.what()).c_str());
    }
  });

  py::class_<BodyTemplate>(m, "Body")
      .def(py::init([](int verts_per_bone, std::uint64_t seed) {
             return build_template({.verts_per_bone = verts_per_bone, .seed = seed});
           }),
           py::arg("verts_per_bone") = 32, py::arg("seed") = 0)
      .def_readonly("num_verts", &BodyTemplate::num_verts)
      .def_readonly("num_shape", &BodyTemplate::num_shape)
      .def_property_readonly("faces",
                             [](const BodyTemplate& b) {
                               return to_numpy(b.faces, {static_cast<py::ssize_t>(b.faces.size() / 3), 3});
                             })
      .def_property_readonly("part_labels",
                             [](const BodyTemplate& b) {
                               return to_numpy(b.part_labels, {static_cast<py::ssize_t>(b.part_labels.size())});
                             })
      .def(
          "forward",
          [](const BodyTemplate& b, const Array& rotations, const Array& betas, const Array& translation) {
            NoGradGuard ng;
            const auto out = body_forward(b, from_numpy(rotations), from_numpy(betas), from_numpy(translation));
            return py::make_tuple(to_numpy(out.vertices), to_numpy(out.joints));
          },
          py::arg("rotations"), py::arg("betas"), py::arg("translation"),
          "rotations [B,22,3,3], betas [B,S], translation [B,3] -> (vertices [B,N,3], joints [B,22,3])");

  m.def(
      "generate_sample",
      [](std::int64_t index, std::uint64_t seed, int input_size) {
        DataConfig c;
        c.seed = seed;
        c.input_size = input_size;
        c.count = static_cast<int>(index + 1);
        c.validate();
        const BodyTemplate body = build_template(c.body);
        const Sample s = generate_sample(body, c, index);
        const py::ssize_t S = s.input_size, T = s.target_size();
        py::dict d;
        d["image"] = to_numpy(s.image, {3, S, S});
        d["depth"] = to_numpy(s.depth, {T, T});
        d["parts"] = to_numpy(s.parts, {T, T});
        d["joints3d"] = to_numpy(s.joints3d, {static_cast<py::ssize_t>(s.joints3d.size() / 3), 3});
        d["joints2d"] = to_numpy(s.joints2d, {static_cast<py::ssize_t>(s.joints2d.size() / 2), 2});
        d["vertices"] = to_numpy(s.vertices, {static_cast<py::ssize_t>(s.vertices.size() / 3), 3});
        d["betas"] = to_numpy(s.params.betas, {static_cast<py::ssize_t>(s.params.betas.size())});
        d["bbox"] = py::make_tuple(s.bbox.cx, s.bbox.cy, s.bbox.size);
        d["has_depth"] = s.has_depth;
        return d;
      },
      py::arg("index"), py::arg("seed") = 0, py::arg("input_size") = 64);

  m.def("mpjpe", [](const Array& p, const Array& g) { return mpjpe(flat(p), flat(g)); }, "millimetres, pelvis-aligned");
  m.def("pa_mpjpe", [](const Array& p, const Array& g) { return pa_mpjpe(flat(p), flat(g)); });
  m.def(
      "umeyama",
      [](const Array& src, const Array& dst, bool with_scale) {
        const auto t = umeyama(flat(src), flat(dst), with_scale);
        return py::make_tuple(t.scale, to_numpy(std::vector<double>(t.rotation.begin(), t.rotation.end()), {3, 3}),
                              to_numpy(std::vector<double>(t.translation.begin(), t.translation.end()), {3}));
      },
      py::arg("src"), py::arg("dst"), py::arg("with_scale") = true, "(scale, R, t) minimising |s R src + t - dst|");

  m.def("preset_config", [](const std::string& name) { return preset_config(name).to_text(); });
  m.def(
      "gradcheck",
      [](bool include_pipeline) {
        GradCheckSuiteOptions o;
        o.include_pipeline = include_pipeline;
        o.pipeline = preset_config("desk").net;
        py::list out;
        for (const auto& r : gradcheck_suite(o)) out.append(py::make_tuple(r.name, r.report.pass, r.report.max_rel_err));
        return out;
      },
      py::arg("include_pipeline") = false);
  m.def("read_dataset", [](const std::string& dir) {
    const Dataset ds = read_dataset(dir);
    py::dict d;
    d["count"] = ds.samples.size();
    d["config_hash"] = ds.manifest.config_hash;
    d["train"] = ds.manifest.train;
    d["val"] = ds.manifest.val;
    return d;
  });
}
