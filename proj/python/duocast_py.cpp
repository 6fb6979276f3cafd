// Python bindings over the C++ core. Arrays cross the boundary as float64
// numpy arrays shaped [S, H, W] (sequences) or [H, W] (single frames).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>

#include "duocast/checkpoint.hpp"
#include "duocast/io.hpp"
#include "duocast/metrics.hpp"
#include "duocast/pipeline.hpp"
#include "duocast/spectral.hpp"
#include "duocast/synthdata.hpp"

namespace py = pybind11;
using namespace duocast;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

SequenceField to_sequence(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("expected an array shaped [H, W] or [S, H, W]");
  const int s = a.ndim() == 3 ? static_cast<int>(a.shape(0)) : 1;
  const int h = static_cast<int>(a.shape(a.ndim() - 2)), w = static_cast<int>(a.shape(a.ndim() - 1));
  const double* p = a.data();
  std::vector<Field> frames;
  for (int i = 0; i < s; ++i) frames.emplace_back(1, h, w, std::vector<double>(p + i * h * w, p + (i + 1) * h * w));
  return SequenceField(std::move(frames));
}

Array from_sequence(const SequenceField& seq, bool squeeze) {
  const py::ssize_t s = seq.length(), h = seq.height(), w = seq.width();
  Array out = squeeze && s == 1 ? Array({h, w}) : Array({s, h, w});
  double* p = out.mutable_data();
  for (int i = 0; i < seq.length(); ++i) p = std::copy(seq[i].values().begin(), seq[i].values().end(), p);
  return out;
}

SpectralMask mask_for(const Array& a, double rho) {
  return SpectralMask::from_fraction(static_cast<int>(a.shape(a.ndim() - 2)), static_cast<int>(a.shape(a.ndim() - 1)),
                                     rho);
}

std::vector<double> thresholds_or_default(const std::optional<std::vector<double>>& t) {
  return t ? *t : default_thresholds();
}

py::tuple dataset_arrays(const EventDataset& ds) {
  const py::ssize_t n = static_cast<py::ssize_t>(ds.size()), s = ds.frames, h = ds.height, w = ds.width;
  Array x({n, s, h, w}), y({n, s, h, w});
  double* px = x.mutable_data();
  double* py_ = y.mutable_data();
  for (const EventPair& e : ds.events)
    for (int i = 0; i < ds.frames; ++i) {
      px = std::copy(e.x[i].values().begin(), e.x[i].values().end(), px);
      py_ = std::copy(e.y[i].values().begin(), e.y[i].values().end(), py_);
    }
  return py::make_tuple(x, y);
}

}  // namespace

PYBIND11_MODULE(_duocast, m) {
  m.doc() = "Dual-band diffusion nowcasting core";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "generate_event",
      [](std::uint64_t seed, double speckle, int size, int frames) {
        EventSpec spec;
        spec.seed = seed;
        spec.speckle_amplitude = speckle;
        spec.height = spec.width = size;
        spec.frames = frames;
        spec.total_frames = std::max(spec.total_frames, 2 * frames);
        const EventPair e = generate_event(spec);
        return py::make_tuple(from_sequence(e.x, false), from_sequence(e.y, false));
      },
      py::arg("seed"), py::arg("speckle") = 0.35, py::arg("size") = 32, py::arg("frames") = 5,
      "Condition and target sequences of one synthetic event.");

  m.def(
      "project_low", [](const Array& a, double rho) { return from_sequence(project_low(to_sequence(a), mask_for(a, rho)), a.ndim() == 2); },
      py::arg("field"), py::arg("rho") = 0.25);
  m.def(
      "project_high",
      [](const Array& a, double rho) { return from_sequence(project_high(to_sequence(a), mask_for(a, rho)), a.ndim() == 2); },
      py::arg("field"), py::arg("rho") = 0.25);
  m.def(
      "band_energy",
      [](const Array& a, double rho) {
        const BandEnergy e = band_energy(to_sequence(a), mask_for(a, rho));
        return py::make_tuple(e.low, e.high);
      },
      py::arg("field"), py::arg("rho") = 0.25, "(low, high) squared norms.");

  m.def("default_thresholds", &default_thresholds);
  m.def(
      "confusion",
      [](const Array& pred, const Array& truth, double tau) {
        const ConfusionCounts c = confusion(to_sequence(pred), to_sequence(truth), tau);
        return py::make_tuple(c.hits, c.misses, c.false_alarms, c.correct_negatives);
      },
      py::arg("pred"), py::arg("truth"), py::arg("tau"), "(hits, misses, false_alarms, correct_negatives)");
  m.def(
      "csi", [](const Array& p, const Array& t, double tau) { return csi(confusion(to_sequence(p), to_sequence(t), tau)); },
      py::arg("pred"), py::arg("truth"), py::arg("tau"));
  m.def(
      "hss", [](const Array& p, const Array& t, double tau) { return hss(confusion(to_sequence(p), to_sequence(t), tau)); },
      py::arg("pred"), py::arg("truth"), py::arg("tau"));
  m.def(
      "csi_m",
      [](const Array& p, const Array& t, const std::optional<std::vector<double>>& th) {
        return csi_m(to_sequence(p), to_sequence(t), thresholds_or_default(th));
      },
      py::arg("pred"), py::arg("truth"), py::arg("thresholds") = py::none());
  m.def("ssim", [](const Array& p, const Array& t) { return ssim(to_sequence(p), to_sequence(t)); }, py::arg("pred"),
        py::arg("truth"));
  m.def("mse", [](const Array& p, const Array& t) { return mse(to_sequence(p), to_sequence(t)); }, py::arg("pred"),
        py::arg("truth"));

  m.def(
      "noise_schedule",
      [](int T, double beta_start, double beta_end) {
        const NoiseSchedule s = make_schedule(T, beta_start, beta_end);
        py::dict d;
        d["beta"] = s.beta;
        d["alpha"] = s.alpha;
        d["alpha_bar"] = s.alpha_bar;
        return d;
      },
      py::arg("T") = 50, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.12);

  m.def("read_duo1", [](const std::string& path) { return dataset_arrays(read_duo1(path)); }, py::arg("path"),
        "(X, Y) arrays shaped [N, S, H, W].");
  m.def(
      "write_duo1",
      [](const std::string& path, const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& y) {
        if (x.ndim() != 4 || y.ndim() != 4) throw py::value_error("X and Y must be shaped [N, S, H, W]");
        for (int k = 0; k < 4; ++k)
          if (x.shape(k) != y.shape(k)) throw py::value_error("X and Y shapes differ");
        EventDataset ds;
        ds.frames = static_cast<int>(x.shape(1));
        ds.height = static_cast<int>(x.shape(2));
        ds.width = static_cast<int>(x.shape(3));
        const std::size_t per = static_cast<std::size_t>(ds.frames) * ds.height * ds.width;
        for (py::ssize_t i = 0; i < x.shape(0); ++i) {
          auto seq = [&](const double* base) {
            std::vector<Field> frames;
            for (int s = 0; s < ds.frames; ++s) {
              const double* p = base + i * per + s * ds.height * ds.width;
              frames.emplace_back(1, ds.height, ds.width, std::vector<double>(p, p + ds.height * ds.width));
            }
            return SequenceField(std::move(frames));
          };
          ds.events.push_back({seq(x.data()), seq(y.data())});
        }
        write_duo1(path, ds);
      },
      py::arg("path"), py::arg("x"), py::arg("y"));

  m.def(
      "forecast",
      [](const std::string& checkpoint, const Array& x, int horizon, std::uint64_t seed) {
        DuoModel model = model_from_checkpoint(load_checkpoint(checkpoint));
        Rng rng(seed);
        const ForecastResult f = forecast(model, to_sequence(x), horizon, rng);
        return py::make_tuple(from_sequence(f.combined, false), from_sequence(f.low, false));
      },
      py::arg("checkpoint"), py::arg("x"), py::arg("horizon"), py::arg("seed") = 11,
      "(combined, low_only) forecasts from a trained checkpoint.");
}
