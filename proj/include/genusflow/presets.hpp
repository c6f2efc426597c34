#pragma once

// Built-in scenarios. The files under scenarios/ carry the same text.

#include <string>
#include <string_view>
#include <vector>

#include "genusflow/error.hpp"
#include "genusflow/scenario.hpp"

namespace genusflow {

struct Preset {
  std::string_view name;
  std::string_view summary;
  std::string_view text;
};

namespace detail {

inline constexpr std::string_view martins_oscillator = R"toml(name = "martins-oscillator"
description = "Forced damped oscillator x' = y - c x, y' = -(k sin 2 pi x - F0 - F1 cos 2 pi t) on a sheared torus"

# k = 0.25: stable running orbit and a directly unstable companion.
# k = 5: the running orbit is inversely unstable.
[params]
c = 1.5
k = 0.25
F0 = 1.5
F1 = 2.0

[variants.inversely-unstable]
k = 5.0

# half-width of the trapping band |y - c x| <= V
[[define]]
name = "V"
expr = "1.05*(k + F0 + F1)/c"

[domain]
kind = "torus"
width = 1.0
y_min = "-V"
y_max = "V + c"
shear = "c"

[field]
kind = "oscillator"
H = "c*x"
g = "k*sin(2*pi*x) - F0 - F1*cos(2*pi*t)"

[integrate]
rel_tol = 1e-9
abs_tol = 1e-12
start = [0.25, 1.4]
t_end = 20.0

[poincare]
period = 1.0
samples = 100
grid = 16
segments = [1, 3]

[attractor]
grid = [256, 256]
iters = 20
region = "(y - c*x)^2 - V^2"
tol_cells = 3

[orbit]
seeds = [[0.24, 1.42], [0.75, 2.3]]
ab = [1, 1]
generator = 3
rel_tol = 1e-10
abs_tol = 1e-12

[index]
grid = [128, 128]
t = 0.0

[check]
samples = 720
times = [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875]

[[check.boundary]]
points = [[0.0, "-V"], [1.0, "c - V"]]
closed = false
inward = 1

[[check.boundary]]
points = [[0.0, "V"], [1.0, "c + V"]]
closed = false
inward = -1

# The field is not periodic in y and the trapping band never reaches the
# top and bottom edges, so only the x identification is audited here and
# in [poincare].
[synth]
samples = 200
segments = [1, 3]
times = [0.0, 0.25, 0.5, 0.75]
)toml";

inline constexpr std::string_view circle_limit_cycle = R"toml(name = "circle-limit-cycle"
description = "Single invariant circle x^2 + y^2 = 1 made attracting by the damping terms"

[params]
damping = 1.0

[domain]
kind = "plane"
box = [-2.0, 2.0, -2.0, 2.0]

[[curve]]
label = "unit circle"
psi = "x^2 + y^2 - 1"
f = "-damping*x"
g = "-damping*y"

[integrate]
rel_tol = 1e-9
abs_tol = 1e-12
start = [1.0, 0.0]
t_end = "10*pi"

[poincare]
period = 1.0
grid = 16

[attractor]
grid = [128, 128]
iters = 20
region = "x^2 + y^2 - 3.5"

[index]
grid = [64, 64]

[check]
samples = 720

[[check.boundary]]
points = [[1.5, 0], [1.0606601717798214, 1.0606601717798212], [0, 1.5], [-1.0606601717798212, 1.0606601717798214], [-1.5, 0], [-1.0606601717798214, -1.0606601717798212], [0, -1.5], [1.060660171779821, -1.0606601717798214]]
closed = true
inward = 1
)toml";

inline constexpr std::string_view genus2_two_knots = R"toml(name = "genus2-two-knots"
description = "Genus-2 surface: two repelling curves, attracting level psi = c_s, two saddles and the cusp"

[params]
kappa = 4.0
c_s = -0.25
eps = 0.1

[[define]]
name = "psi"
expr = "sin(2*x) - sin(2*y) - 0.5*sin(2*x)*sin(2*y)"

[[define]]
name = "psi_x"
expr = "2*cos(2*x) - cos(2*x)*sin(2*y)"

[[define]]
name = "psi_y"
expr = "-2*cos(2*y) - sin(2*x)*cos(2*y)"

[domain]
kind = "genus"
genus = 2

[field]
kind = "curves"
cusp_epsilon = "eps"

[[curve]]
label = "outer repeller"
psi = "psi - 1.2"
f = "kappa*(psi - c_s)*psi_x"
g = "kappa*(psi - c_s)*psi_y"

[[curve]]
label = "inner repeller"
psi = "psi + 1.1"

[integrate]
rel_tol = 1e-9
abs_tol = 1e-12
start = [0.5, 4.5]
t_end = 10.0

[poincare]
period = 0.25
samples = 100
grid = 16

[attractor]
grid = [256, 256]
iters = 20
region = "(psi - 1.15)*(psi + 1.05)"
tol_cells = 3

[orbit]
seeds = [[0.8, 3.9], [2.3, 5.5]]
ab = [0, 1]
rel_tol = 1e-12
abs_tol = 1e-14

[index]
grid = [128, 128]

[synth]
samples = 200
)toml";

inline constexpr std::string_view genus2_one_knot = R"toml(name = "genus2-one-knot"
description = "Genus-2 surface: one repelling curve, attracting level psi = c_s, two saddles and the cusp"

[params]
kappa = 4.0
c_s = -0.25
eps = 0.1

[[define]]
name = "psi"
expr = "sin(2*x) - sin(2*y) - 0.5*sin(2*x)*sin(2*y)"

[[define]]
name = "psi_x"
expr = "2*cos(2*x) - cos(2*x)*sin(2*y)"

[[define]]
name = "psi_y"
expr = "-2*cos(2*y) - sin(2*x)*cos(2*y)"

[domain]
kind = "genus"
genus = 2

[field]
kind = "curves"
cusp_epsilon = "eps"

[[curve]]
label = "repeller"
psi = "psi - 1.2"
f = "kappa*(psi - c_s)*psi_x"
g = "kappa*(psi - c_s)*psi_y"

[integrate]
rel_tol = 1e-9
abs_tol = 1e-12
start = [0.5, 4.5]
t_end = 10.0

[poincare]
period = 0.25
samples = 100
grid = 16

[attractor]
grid = [256, 256]
iters = 20
region = "(psi - 1.15)*(psi + 1.1)"
tol_cells = 3

[orbit]
seeds = [[0.8, 3.9], [2.3, 5.5]]
ab = [0, 1]
rel_tol = 1e-12
abs_tol = 1e-14

[index]
grid = [128, 128]

[synth]
samples = 200
)toml";

inline constexpr std::string_view torus_forced = R"toml(name = "torus-forced"
description = "Doubly periodic forced field on the unit torus with an attracting circle near y = 0"

[params]
a = 0.25
b = 0.1

[domain]
kind = "torus"
width = 1.0
y_min = 0.0
y_max = 1.0

[field]
kind = "components"
fx = "1 + a*sin(2*pi*y)*cos(2*pi*t)"
fy = "-sin(2*pi*y) + b*sin(2*pi*x)*cos(2*pi*t)"

[integrate]
rel_tol = 1e-11
abs_tol = 1e-13
start = [0.1, 0.3]
t_end = 10.0

[poincare]
period = 1.0
samples = 100
grid = 16

# trapping annulus around y = 0; the repelling circle y = 1/2 is outside
[attractor]
grid = [256, 256]
iters = 20
region = "-cos(2*pi*y)"
tol_cells = 3

[orbit]
seeds = [[0.5, 0.0]]
ab = [1, 1]
generator = 3

[index]
grid = [64, 64]
t = 0.25

[synth]
samples = 200
times = [0.0, 0.25, 0.5]
)toml";

}  // namespace detail

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> all{
      {"martins-oscillator", "forced damped oscillator; variant inversely-unstable", detail::martins_oscillator},
      {"circle-limit-cycle", "attracting unit circle in the plane", detail::circle_limit_cycle},
      {"genus2-two-knots", "genus 2, two repelling curves and two saddles", detail::genus2_two_knots},
      {"genus2-one-knot", "genus 2, one repelling curve and two saddles", detail::genus2_one_knot},
      {"torus-forced", "doubly periodic forced field on the unit torus", detail::torus_forced},
  };
  return all;
}

inline const Preset& find_preset(std::string_view name) {
  for (const Preset& p : presets()) {
    if (p.name == name) return p;
  }
  throw Error(ErrorKind::input, "unknown preset '" + std::string(name) + "'");
}

/// "name" or "name:variant".
inline Scenario load_preset(std::string_view spec) {
  const std::size_t colon = spec.find(':');
  const std::string_view name = spec.substr(0, colon);
  const Preset& p = find_preset(name);
  Scenario sc = parse_scenario(std::string(p.text), std::string(p.name));
  if (colon != std::string_view::npos) select_variant(sc, std::string(spec.substr(colon + 1)));
  return sc;
}

}  // namespace genusflow
