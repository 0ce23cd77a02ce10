// Thawed Gaussian in a Morse well: single quartic vs variational vs local harmonic.
// Prints the center, exact energy and effective energy every 5 time units.

#include <cstdio>

#include "gwpd/integrators.hpp"

using namespace gwpd;

int main() {
    const PhysicalSetup setup(1);
    const PotentialModel morse = PotentialModel::morse_1d(2.0, 0.5);
    GaussianHeller s0{Vec::Constant(1, 0.8), Vec::Zero(1), CMat::Constant(1, 1, I), 0.0};
    s0 = normalize_initial(s0, setup);

    const SchemeSpec scheme{BaseScheme::VTV, 4, Composition::triple_jump, 0.01, 3000};
    for (MethodId id : {MethodId::tgwd_variational, MethodId::tgwd_single_quartic_var, MethodId::tgwd_local_harmonic}) {
        const Propagator<GaussianHeller> prop(Method(MethodSpec{id, Vec::Zero(1)}, morse, setup), scheme);
        const Trajectory<GaussianHeller> tr = propagate(s0, prop, {500, true, false});
        std::printf("%s\n%8s %12s %12s %12s\n", std::string(to_string(id)).c_str(), "t", "q", "E", "E_eff");
        for (std::size_t i = 0; i < tr.states.size(); ++i)
            std::printf("%8.2f %12.6f %12.8f %12.8f\n", tr.times[i], tr.states[i].q(0), tr.diagnostics[i].E,
                        tr.diagnostics[i].E_eff);
    }
    return 0;
}
