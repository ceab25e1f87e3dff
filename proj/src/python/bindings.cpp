#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "step/checkpoint.hpp"
#include "step/dataset.hpp"
#include "step/errors.hpp"
#include "step/evaluate.hpp"
#include "step/features.hpp"
#include "step/model.hpp"

namespace py = pybind11;
using namespace step;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

FeatureSequence to_sequence(const std::string& clip_id, const F32Array& patches,
                            const std::optional<F32Array>& cls) {
  if (patches.ndim() != 3) throw ShapeError("patch_tokens must have shape (T, n, d)");
  FeatureSequence f;
  f.clip_id = clip_id;
  f.frames = patches.shape(0);
  f.tokens = patches.shape(1);
  f.dim = patches.shape(2);
  f.patch_tokens.assign(patches.data(), patches.data() + patches.size());
  if (cls) {
    if (cls->ndim() != 2 || std::size_t(cls->shape(0)) != f.frames || std::size_t(cls->shape(1)) != f.dim) {
      throw ShapeError("frame_cls must have shape (T, d)");
    }
    f.frame_cls.emplace(cls->data(), cls->data() + cls->size());
  }
  f.validate();
  return f;
}

py::dict to_dict(const FeatureSequence& f) {
  py::dict out;
  out["clip_id"] = f.clip_id;
  F32Array patches({f.frames, f.tokens, f.dim});
  std::memcpy(patches.mutable_data(), f.patch_tokens.data(), 4 * f.patch_tokens.size());
  out["patch_tokens"] = patches;
  if (f.frame_cls) {
    F32Array cls({f.frames, f.dim});
    std::memcpy(cls.mutable_data(), f.frame_cls->data(), 4 * f.frame_cls->size());
    out["frame_cls"] = cls;
  } else {
    out["frame_cls"] = py::none();
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Feature containers, manifests and probe inference for the temporal probing toolkit";

  auto base = py::register_exception<Error>(m, "StepError");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<IndexError>(m, "IndexError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  auto format = py::register_exception<FormatError>(m, "FormatError", data.ptr());
  py::register_exception<BadMagicError>(m, "BadMagicError", format.ptr());
  py::register_exception<VersionMismatchError>(m, "VersionMismatchError", format.ptr());
  py::register_exception<TruncatedError>(m, "TruncatedError", format.ptr());
  py::register_exception<ChecksumError>(m, "ChecksumError", format.ptr());

  m.attr("FEATURE_VERSION") = kFeatureVersion;
  m.attr("CHECKPOINT_VERSION") = kCheckpointVersion;

  m.def(
      "encode_features",
      [](const std::string& clip_id, const F32Array& patches, const std::optional<F32Array>& cls) {
        const auto bytes = encode_features(to_sequence(clip_id, patches, cls));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("clip_id"), py::arg("patch_tokens"), py::arg("frame_cls") = py::none());
  m.def(
      "decode_features",
      [](const py::bytes& b, const std::string& clip_id) {
        const std::string_view s(b);
        const std::vector<std::uint8_t> bytes(s.begin(), s.end());
        return to_dict(decode_features(bytes, clip_id));
      },
      py::arg("data"), py::arg("clip_id") = "");
  m.def(
      "write_features",
      [](const std::filesystem::path& path, const std::string& clip_id, const F32Array& patches,
         const std::optional<F32Array>& cls) { write_features(path, to_sequence(clip_id, patches, cls)); },
      py::arg("path"), py::arg("clip_id"), py::arg("patch_tokens"), py::arg("frame_cls") = py::none());
  m.def(
      "read_features",
      [](const std::filesystem::path& path, const std::string& clip_id) { return to_dict(read_features(path, clip_id)); },
      py::arg("path"), py::arg("clip_id") = "");
  m.def(
      "corruption_permutation",
      [](std::size_t frames, const std::string& mode) {
        return corruption_permutation(frames, CorruptionMode::parse(mode));
      },
      py::arg("frames"), py::arg("mode"));

  py::enum_<Split>(m, "Split").value("train", Split::Train).value("val", Split::Val).value("test", Split::Test);

  py::class_<ClipRecord>(m, "ClipRecord")
      .def(py::init([](std::string id, std::filesystem::path path, std::size_t label, Split split) {
             return ClipRecord{std::move(id), std::move(path), label, split};
           }),
           py::arg("clip_id"), py::arg("feature_path"), py::arg("label"), py::arg("split"))
      .def_readwrite("clip_id", &ClipRecord::clip_id)
      .def_readwrite("feature_path", &ClipRecord::feature_path)
      .def_readwrite("label", &ClipRecord::label)
      .def_readwrite("split", &ClipRecord::split);

  py::class_<DatasetManifest>(m, "Manifest")
      .def(py::init<>())
      .def_readwrite("class_names", &DatasetManifest::class_names)
      .def_readwrite("frames", &DatasetManifest::frames)
      .def_readwrite("tokens", &DatasetManifest::tokens)
      .def_readwrite("dim", &DatasetManifest::dim)
      .def_readwrite("clips", &DatasetManifest::clips)
      .def_readwrite("base_dir", &DatasetManifest::base_dir)
      .def("validate", &DatasetManifest::validate)
      .def("indices", &DatasetManifest::indices)
      .def("resolve", &DatasetManifest::resolve)
      .def("__str__", &format_manifest);
  m.def("parse_manifest", &parse_manifest, py::arg("text"), py::arg("base_dir") = std::filesystem::path());
  m.def("load_manifest", &load_manifest, py::arg("path"));
  m.def("write_manifest", &write_manifest, py::arg("path"), py::arg("manifest"));
  m.def("format_manifest", &format_manifest, py::arg("manifest"));
  m.def(
      "check_dataset",
      [](const DatasetManifest& manifest) { return load_dataset(manifest).size(); },
      py::arg("manifest"), "Loads every listed container and checks it against the header; returns the clip count.");

  py::class_<ProbeModel<float>>(m, "Probe")
      .def(py::init([](const std::string& variant, std::size_t d, std::size_t heads, std::size_t classes,
                       std::size_t frames, std::size_t tokens, std::uint64_t seed) {
             auto cfg = make_probe_config(parse_probe_variant(variant), d, heads, classes, frames, tokens);
             cfg.seed = seed;
             return init_params<float>(cfg, seed);
           }),
           py::arg("variant"), py::arg("d_model"), py::arg("heads"), py::arg("classes"), py::arg("frames"),
           py::arg("tokens"), py::arg("seed") = 42)
      .def_static(
          "load", [](const std::filesystem::path& p) { return load_checkpoint(p).model; }, py::arg("path"))
      .def(
          "save", [](const ProbeModel<float>& p, const std::filesystem::path& path) { save_checkpoint(path, p); },
          py::arg("path"))
      .def_property_readonly("variant", [](const ProbeModel<float>& p) { return std::string(to_string(p.config.variant)); })
      .def_property_readonly("num_classes", [](const ProbeModel<float>& p) { return p.config.num_classes; })
      .def("count_params", &ProbeModel<float>::count_params)
      .def(
          "logits",
          [](const ProbeModel<float>& p, const F32Array& patches, const std::optional<F32Array>& cls) {
            const auto f = to_sequence("", patches, cls);
            std::vector<float> out;
            {
              py::gil_scoped_release release;
              out = predict_logits(p, f);
            }
            return out;
          },
          py::arg("patch_tokens"), py::arg("frame_cls") = py::none());

  m.def(
      "count_params",
      [](const std::string& variant, std::size_t d, std::size_t heads, std::size_t classes, std::size_t frames,
         std::size_t tokens) {
        return init_params<float>(make_probe_config(parse_probe_variant(variant), d, heads, classes, frames, tokens), 0)
            .count_params();
      },
      py::arg("variant"), py::arg("d_model"), py::arg("heads"), py::arg("classes"), py::arg("frames"),
      py::arg("tokens"));
}
