#pragma once

#include <map>
#include <string>
#include <string_view>

namespace jetmech::presets {

inline constexpr std::string_view harmonic = R"(# Undamped, unforced oscillator: phi = -k x dx + m x' dx' is exact.
system "harmonic" {
  parameter m = 1, k = 1
  coordinate x
  momentum x: m*x'
  force x: -k*x
  lagrangian: m*x'^2/2 - k*x^2/2
  oracle x: -k*x
  init x = 1, x' = 0
  time 0 .. 100 step 1e-3
}
)";

inline constexpr std::string_view damped_ho = R"(# Forced, damped oscillator: m x'' = -k x - b x' + f(t).
system "damped_ho" {
  parameter m = 1, k = 1, b = 0.1
  coordinate x
  signal f = sinusoid(0.3, 1.2, 0)
  momentum x: m*x'
  force x: -k*x - b*x' + sig(f)
  # exact part: kinetic minus potential energy
  lagrangian: m*x'^2/2 - k*x^2/2
  antiexact x: -b*x' + sig(f)
  oracle x: -k*x - b*x' + sig(f)
  init x = 1, x' = 0
  time 0 .. 20 step 1e-3
}
)";

inline constexpr std::string_view duffing = R"(# Linearly damped anharmonic oscillator: U = a x^4/4, F_d = b x'.
system "duffing" {
  parameter m = 1, a = 1, b = 0.1
  coordinate x
  momentum x: m*x'
  force x: -a*x^3 - b*x'
  lagrangian: m*x'^2/2 - a*x^4/4
  antiexact x: -b*x'
  oracle x: -a*x^3 - b*x'
  init x = 1, x' = 0
  time 0 .. 20 step 1e-3
}
)";

inline constexpr std::string_view vanderpol = R"(# Van der Pol: damping coefficient b(x^2) = b0 (x^2 - 1).
system "vanderpol" {
  parameter m = 1, k = 1, b0 = 1
  coordinate x
  momentum x: m*x'
  force x: -k*x - b0*(x^2 - 1)*x'
  lagrangian: m*x'^2/2 - k*x^2/2
  antiexact x: -b0*(x^2 - 1)*x'
  oracle x: -k*x - b0*(x^2 - 1)*x'
  init x = 0.5, x' = 0
  time 0 .. 20 step 1e-3
}
)";

inline const std::map<std::string, std::string_view>& all() {
    static const std::map<std::string, std::string_view> table{
        {"harmonic", harmonic}, {"damped_ho", damped_ho}, {"duffing", duffing}, {"vanderpol", vanderpol}};
    return table;
}

}  // namespace jetmech::presets
