// Draws one M1 replication, tunes the LASSO on the validation half and runs
// two LLA steps with SCAD from it. Prints the recovered support next to the
// truth and the oracle.

#include <iostream>

#include "fcp/lla.hpp"
#include "fcp/simulation.hpp"

int main(int argc, char** argv) {
    using namespace fcp;
    ExperimentConfig cfg;
    cfg.model = ModelId::M1;
    cfg.n = 100;
    cfg.p = 200;
    const std::uint64_t rep = argc > 1 ? std::stoull(argv[1]) : 0;
    const Replication r = generate(cfg, rep);

    const TuneResult lasso = tune_lambda(cfg, r.train, r.validation, parse_method("lasso"));
    const TuneResult scad = tune_lambda(cfg, r.train, r.validation, parse_method("scad-2slla*"), &lasso.estimate);
    const Estimate oracle = oracle_estimator(r.train, r.support, cfg.solver);

    auto show = [](const char* name, const Support& s) {
        std::cout << name << " {";
        for (std::size_t i = 0; i < s.size(); ++i) std::cout << (i ? "," : "") << s[i] + 1;
        std::cout << "}\n";
    };
    show("truth       ", r.support);
    show("lasso       ", lasso.estimate.support());
    show("scad 2-step ", scad.estimate.support());
    std::cout << "lasso lambda " << lasso.best_lambda << ", scad lambda " << scad.best_lambda << "\n";
    std::cout << "||scad - oracle||_max = " << (scad.estimate.vector() - oracle.vector()).cwiseAbs().maxCoeff()
              << "\n";
    return 0;
}
