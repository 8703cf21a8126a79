"""Constructing the weak-field equilibrium family.

The periodic magnetic potential solves d2psi/dx2 = g(psi) where g is a
velocity moment of the electron profile.  Evenness in the momentum gives
g(0) = 0, and a positive anisotropy moment makes the origin a center, so
a one-parameter family of potential wells exists.  As the amplitude
shrinks, the orbit period approaches the critical period set by g'(0).
"""

import numpy as np

import vmspec as vm

prof, weight = vm.build_profile("weakfield_family")
quad = vm.build_velocity_quadrature(weight, kinks=prof.kinks, n_r=48, n_theta=64,
                                    n_r_tail=12)

cc = vm.check_center_conditions(prof, quad)
print(f"g(0) = {cc.g0:+.3e}   g'(0) = {cc.gprime0:+.6f}   center ok: {cc.ok}")
print(f"critical period 2*pi/sqrt(-g'(0)) = {cc.critical_period:.6f}")
print()

print(f"{'eps':>6s} {'period':>10s} {'T/Pcr':>9s} {'|psi|C1':>9s} {'residual':>10s}")
for eps in (0.4, 0.2, 0.1, 0.05, 0.025):
    st = vm.solve_equilibrium_potential(prof, eps, quad)
    print(f"{eps:6g} {st.period:10.6f} {st.period / cc.critical_period:9.6f} "
          f"{st.meta['c1_norm']:9.4f} {st.meta['residual_inf']:10.2e}")

print()
print("the period decreases towards the critical one from above: this well")
print("softens with amplitude, so every member has period above critical")
print()

state = vm.solve_equilibrium_potential(prof, 0.1, quad)
xs = np.linspace(0.0, state.period, 9)
print("potential profile (one period):")
print("  x:   " + " ".join(f"{x:8.3f}" for x in xs))
print("  psi: " + " ".join(f"{v:8.4f}" for v in state.psi0(xs)))
print("  B:   " + " ".join(f"{v:8.4f}" for v in state.b0(xs)))

eps0 = vm.find_center_amplitude(prof, quad, eps_start=0.05, eps_cap=2.0, iters=4)
print(f"\nestimated center basin: closing orbits up to about eps = {eps0:.3g}")
