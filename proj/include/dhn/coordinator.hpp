#ifndef DHN_COORDINATOR_HPP
#define DHN_COORDINATOR_HPP

#include <vector>

#include "dhn/lowlevel.hpp"
#include "dhn/partition.hpp"

namespace dhn {

/// One candidate selection per user-bearing subsystem, coupled through the
/// reduced graph: conservation fixes the pass-through flows and the total
/// supply, and the canonical nodal pressure assignment (spanning-tree
/// propagation from the terminal) must reproduce every edge's pressure drop
/// within epsilon.
struct SelectionProblem {
    const ReducedGraph* reduced = nullptr;
    std::vector<const CostTable*> tables; // one per user-bearing subsystem, in
                                          // reduced-edge order
    double epsilon_pa = 1.0;
};

struct Selection {
    std::vector<int> indices;        // chosen candidate per user-bearing subsystem
    double total_cost_kg = 0.0;
    double total_supply_kg_s = 0.0;
    double pressure_residual_pa = 0.0;
    double mass_residual_kg_s = 0.0;
};

/// Exact discrete optimum: exhaustive enumeration up to 1e5 combinations,
/// cost-sorted branch and bound above. Ties break to the lexicographically
/// smallest index vector. Throws NoFeasibleSelection when no combination
/// satisfies conservation and the epsilon pressure balance.
Selection select_optimal(const SelectionProblem& p);

struct SelectionResiduals {
    double mass_kg_s = 0.0;
    double pressure_pa = 0.0;
    double total_supply_kg_s = 0.0;
    bool flow_reversal = false;
};

/// Residuals of Eqs. of mass conservation and pressure balance for a given
/// index vector (no feasibility thresholding).
SelectionResiduals feasibility_check(const SelectionProblem& p, const std::vector<int>& idx);

/// Default balance tolerance for a candidate grid: half the largest adjacent
/// gap, i.e. the quantization radius of the discrete pressure choices.
double default_epsilon_pa(const CandidateSet& candidates);

} // namespace dhn

#endif
