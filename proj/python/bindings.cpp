#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hipass/blur.hpp"
#include "hipass/flow.hpp"
#include "hipass/kernels.hpp"
#include "hipass/metrics.hpp"
#include "hipass/model.hpp"
#include "hipass/sharpen.hpp"
#include "hipass/signal.hpp"
#include "hipass/train.hpp"

namespace py = pybind11;
using namespace hipass;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<double>, py::array::c_style>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    if (shape.empty()) shape = {1};
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
    return out;
}

// [T,C,H,W] <-> clip
VideoClip to_clip(const Array& a) {
    if (a.ndim() != 4) throw DimensionError("clip must be a [T,C,H,W] array", "clip");
    return VideoClip::from_stacked(to_tensor(a));
}

Array clip_array(const VideoClip& c) { return to_array(c.stacked()); }

std::vector<Tensor> to_tensors(const Array& a) {
    const Tensor t = to_tensor(a);
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < t.dim(0); ++i) out.push_back(t.slice(i));
    return out;
}

Array stack(const std::vector<Tensor>& ts) {
    if (ts.empty()) return Array(std::vector<py::ssize_t>{0});
    Shape s{ts.size()};
    s.insert(s.end(), ts.front().shape().begin(), ts.front().shape().end());
    Tensor out(s);
    for (std::size_t i = 0; i < ts.size(); ++i) out.set_slice(i, ts[i]);
    return to_array(out);
}

ComplexArray spectrum_array(const Spectrum& s) {
    ComplexArray out({static_cast<py::ssize_t>(s.rows), static_cast<py::ssize_t>(s.cols)});
    std::copy(s.bins.begin(), s.bins.end(), out.mutable_data());
    return out;
}

FlowProvider flows_from(const py::object& flows, const VideoClip& clip) {
    if (flows.is_none()) return zero_flows(clip.frame_shape());
    if (py::isinstance<py::str>(flows)) {
        const auto mode = flows.cast<std::string>();
        if (mode == "zero") return zero_flows(clip.frame_shape());
        if (mode == "block") return block_matching_flows(clip);
        throw UsageError("flows must be None, 'zero', 'block' or a [T-1,2,H,W] array", "flows");
    }
    return ground_truth_flows(to_tensors(flows.cast<Array>()));
}

DatasetSample to_sample(const py::dict& d) {
    DatasetSample s;
    s.blurry = to_clip(d["blurry"].cast<Array>());
    s.sharp = to_clip(d["sharp"].cast<Array>());
    s.flow_gt = to_tensors(d["flow"].cast<Array>());
    return s;
}

py::dict from_sample(const DatasetSample& s) {
    py::dict d;
    d["blurry"] = clip_array(s.blurry);
    d["sharp"] = clip_array(s.sharp);
    d["flow"] = stack(s.flow_gt);
    return d;
}

}  // namespace

PYBIND11_MODULE(_hipass, m) {
    m.doc() = "Video deblurring with adaptive high-pass kernel prediction";

    static py::exception<Error> base(m, "HipassError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = py::reinterpret_borrow<py::object>(base)(e.what());
            err.attr("kind") = e.kind();
            err.attr("field") = e.field();
            PyErr_SetObject(base.ptr(), err.ptr());
        }
    });

    // signal
    m.def(
        "conv2d",
        [](const Array& x, const Array& k, const std::string& padding) {
            return to_array(conv2d(to_tensor(x), to_tensor(k), parse_padding(padding)));
        },
        py::arg("x"), py::arg("kernel"), py::arg("padding") = "same-replicate");
    m.def(
        "conv3d_temporal",
        [](const Array& w, const Array& k, const std::string& padding) {
            return to_array(conv3d_temporal(to_tensor(w), to_tensor(k), parse_padding(padding)));
        },
        py::arg("window"), py::arg("kernel"), py::arg("padding") = "same-replicate");
    m.def("dft2d", [](const Array& x) { return spectrum_array(dft2d(to_tensor(x))); });
    m.def("rotate90", [](const Array& k) { return to_array(rotate90(to_tensor(k))); });
    m.def("bilinear_warp", [](const Array& x, const Array& f) { return to_array(bilinear_warp(to_tensor(x), to_tensor(f))); });

    // kernels
    m.def(
        "make_basis",
        [](const std::string& kind, std::uint64_t seed) {
            const KernelBasis b = make_basis(parse_basis_kind(kind), seed);
            std::vector<std::string> names;
            for (std::size_t j = 0; j < b.size(); ++j) names.push_back(b.name(j));
            return py::make_tuple(to_array(b.stacked()), names);
        },
        py::arg("kind") = "default", py::arg("seed") = 0);
    m.def(
        "combine",
        [](const std::vector<double>& coeffs, const std::string& kind, std::uint64_t seed) {
            const KernelBasis b = make_basis(parse_basis_kind(kind), seed);
            const DynamicKernel k = combine(b, CoefficientVector(coeffs));
            return py::make_tuple(to_array(k.kernel.reshaped(b.extents())), to_array(k.rotated.reshaped(b.extents())));
        },
        py::arg("coefficients"), py::arg("kind") = "default", py::arg("seed") = 0);
    m.def("gram_schmidt", [](const Array& v, const Array& u) { return to_array(gram_schmidt(to_tensor(v), to_tensor(u))); });
    m.def(
        "random_high_pass",
        [](std::size_t rows, std::size_t cols, std::uint64_t seed) { return to_array(random_high_pass(rows, cols, seed)); },
        py::arg("rows"), py::arg("cols"), py::arg("seed"));
    m.def(
        "frequency_response",
        [](const Array& k, std::size_t grid) {
            const FrequencyResponse fr = frequency_response(to_tensor(k), grid);
            py::dict d;
            d["magnitudes"] = to_array(fr.magnitudes);
            d["dc_gain"] = fr.dc_gain;
            d["cutoff"] = fr.cutoff;
            d["peak_frequency"] = fr.peak_frequency;
            d["peak_magnitude"] = fr.peak_magnitude;
            return d;
        },
        py::arg("kernel"), py::arg("grid") = 16);
    m.def(
        "verify_high_pass",
        [](const Array& k, double tol) {
            const HighPassReport r = verify_high_pass(to_tensor(k), tol);
            return py::make_tuple(r.high_pass, r.dc_gain);
        },
        py::arg("kernel"), py::arg("tolerance") = 1e-9);

    // blur and baselines
    m.def(
        "accumulate_blur",
        [](const Array& sharp, std::size_t accumulated, std::size_t stride, const std::string& crf, double gamma) {
            BlurConfig cfg;
            cfg.accumulated = accumulated;
            cfg.stride = stride;
            if (crf == "gamma")
                cfg.crf = Crf::gamma;
            else if (crf != "identity")
                throw UsageError("unknown CRF '" + crf + "'", "crf");
            cfg.gamma = gamma;
            return clip_array(accumulate_blur(to_clip(sharp), cfg));
        },
        py::arg("sharp"), py::arg("accumulated") = 5, py::arg("stride") = 5, py::arg("crf") = "identity",
        py::arg("gamma") = 2.2);
    m.def(
        "unsharp_mask",
        [](const Array& frame, double lambda, bool clamp, const py::object& kernel) {
            UnsharpConfig cfg;
            cfg.kernel = kernel.is_none() ? negative_laplacian() : to_tensor(kernel.cast<Array>());
            cfg.lambda = lambda;
            cfg.clamp = clamp;
            return to_array(unsharp_mask(to_tensor(frame), cfg));
        },
        py::arg("frame"), py::arg("lam") = 1.0, py::arg("clamp") = true, py::arg("kernel") = py::none());
    m.def(
        "generate_dataset",
        [](std::size_t samples, std::uint64_t seed, std::size_t height, std::size_t width, std::size_t frames,
           double max_speed) {
            SynthConfig sc;
            sc.samples = samples;
            sc.height = height;
            sc.width = width;
            sc.frames = frames;
            sc.max_speed = max_speed;
            py::list out;
            for (const auto& s : generate_dataset(sc, seed)) out.append(from_sample(s));
            return out;
        },
        py::arg("samples"), py::arg("seed") = 0, py::arg("height") = 64, py::arg("width") = 64, py::arg("frames") = 5,
        py::arg("max_speed") = 1.5);

    // metrics
    m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_tensor(a), to_tensor(b)); });
    m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_tensor(a), to_tensor(b)); });
    m.def(
        "subband_mse",
        [](const Array& out, const Array& ref, const Array& gt) {
            const SubbandReport r = subband_mse(to_clip(out), to_clip(ref), to_clip(gt));
            py::dict d;
            d["edges"] = std::vector<double>(r.edges.begin(), r.edges.end());
            d["relative"] = std::vector<double>(r.mse.begin(), r.mse.end());
            d["output"] = std::vector<double>(r.absolute.begin(), r.absolute.end());
            d["reference"] = std::vector<double>(r.reference.begin(), r.reference.end());
            return d;
        },
        py::arg("output"), py::arg("reference"), py::arg("truth"));

    // model
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](const std::string& variant, std::size_t n_paths, std::size_t channels,
                         std::size_t path_channels, std::size_t gen_channels, std::size_t res_blocks,
                         double downsample, std::size_t image_channels, const std::string& basis) {
                 ModelConfig c;
                 c.variant = parse_variant(variant);
                 c.n_paths = n_paths;
                 c.channels = channels;
                 c.path_channels = path_channels;
                 c.gen_channels = gen_channels;
                 c.res_blocks = res_blocks;
                 c.downsample = downsample;
                 c.image_channels = image_channels;
                 c.basis = parse_basis_kind(basis);
                 c.validate();
                 return c;
             }),
             py::arg("variant") = "ahfnet", py::arg("n_paths") = 2, py::arg("channels") = 16,
             py::arg("path_channels") = 8, py::arg("gen_channels") = 8, py::arg("res_blocks") = 4,
             py::arg("downsample") = 0.25, py::arg("image_channels") = 1, py::arg("basis") = "default")
        .def_readwrite("n_paths", &ModelConfig::n_paths)
        .def_readwrite("channels", &ModelConfig::channels)
        .def_readwrite("res_blocks", &ModelConfig::res_blocks)
        .def_readwrite("downsample", &ModelConfig::downsample)
        .def_property_readonly("variant", [](const ModelConfig& c) { return to_string(c.variant); });

    m.def(
        "count_macs",
        [](const ModelConfig& cfg, std::size_t h, std::size_t w) {
            const MacReport r = count_macs(cfg, h, w);
            py::dict layers;
            for (const auto& l : r.layers) layers[py::str(l.name)] = py::make_tuple(l.macs, l.params);
            return py::make_tuple(r.macs_per_frame, r.params, layers);
        },
        py::arg("config"), py::arg("height"), py::arg("width"));

    py::class_<Model>(m, "Model")
        .def(py::init<ModelConfig, std::uint64_t>(), py::arg("config") = ModelConfig{}, py::arg("seed") = 0)
        .def_property_readonly("config", &Model::config)
        .def("parameter_count", [](const Model& self) { return self.parameters().scalar_count(); })
        .def("zero_final_layer", &Model::zero_final_layer)
        .def(
            "infer",
            [](const Model& self, const Array& clip, const py::object& flows) {
                const VideoClip c = to_clip(clip);
                return clip_array(self.infer(c, flows_from(flows, c)));
            },
            py::arg("clip"), py::arg("flows") = py::none())
        .def(
            "trace_kernels",
            [](const Model& self, const Array& clip) {
                const VideoClip c = to_clip(clip);
                ForwardTrace trace;
                self.infer(c, zero_flows(c.frame_shape()), &trace);
                py::list frames;
                for (const auto& f : trace.frames) {
                    py::list paths;
                    for (const auto& r : f) paths.append(py::make_tuple(to_array(r.coefficients), to_array(r.kernel)));
                    frames.append(paths);
                }
                return frames;
            },
            py::arg("clip"))
        .def("save", [](const Model& self, const std::filesystem::path& p) { save_checkpoint(p, self, nn::TrainState{}); })
        .def_static("load", [](const std::filesystem::path& p) { return std::move(load_checkpoint(p).model); });

    m.def(
        "train",
        [](Model& model, const py::list& train_set, const py::list& val_set, std::size_t iterations, double lr,
           double charbonnier_eps, std::size_t batch, std::size_t sequence, std::size_t patch, std::uint64_t seed) {
            std::vector<DatasetSample> tr, va;
            for (const auto& s : train_set) tr.push_back(to_sample(s.cast<py::dict>()));
            for (const auto& s : val_set) va.push_back(to_sample(s.cast<py::dict>()));
            TrainConfig tc;
            tc.iterations = iterations;
            tc.charbonnier_eps = charbonnier_eps;
            tc.batch = batch;
            tc.sequence = sequence;
            tc.patch = patch;
            tc.val_every = 0;
            tc.seed = seed;
            nn::TrainState st;
            st.schedule.initial_lr = lr;
            st.schedule.period = iterations;
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(model, st, tr, va, tc);
            }
            py::dict d;
            d["blurry_psnr"] = r.blurry_psnr;
            d["final_psnr"] = r.final_psnr;
            std::vector<double> losses;
            for (const auto& rec : r.log) losses.push_back(rec.loss);
            d["loss"] = losses;
            return d;
        },
        py::arg("model"), py::arg("train_set"), py::arg("val_set"), py::arg("iterations") = 100, py::arg("lr") = 2e-4,
        py::arg("charbonnier_eps") = 1e-3, py::arg("batch") = 2, py::arg("sequence") = 5, py::arg("patch") = 64,
        py::arg("seed") = 0);
}
