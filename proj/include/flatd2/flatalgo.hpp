#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flatd2/coordxform.hpp"
#include "flatd2/reptest.hpp"
#include "flatd2/system.hpp"

namespace flatd2 {

enum class CaseTag { Case1, Case2Dim3, Case2Dim4, Case3, TerminalSfl, TerminalFail, Inconclusive };
const char* case_tag_name(CaseTag t);
/// 1, 2 or 3 for the three reduction cases, 0 otherwise.
int case_number(CaseTag t);

/// D_0 = span{d/du_j}, D_i = D_{i-1} + [f, D_{i-1}] on states and inputs.
struct SflChain {
    std::vector<Distribution> levels;  // D_0, D_1, ... (rank-increasing bases)
    std::vector<int> ranks;
    std::vector<bool> involutive;
    bool sfl = false;
};
SflChain sfl_chain(const SystemModel& m, Context& ctx);
bool sfl_test(const SystemModel& m, Context& ctx);

/// Case decision for a model that is not static feedback linearizable. For
/// an affine model `dim_closure` receives the dimension of the involutive
/// closure of span{b_1, b_2}.
CaseTag select_case(const SystemModel& m, Context& ctx, int* dim_closure = nullptr);

/// alpha with alpha1*b1 + alpha2*b2 = b_c for case 2. `m` must be affine in
/// its inputs.
AlphaSolution build_bc(const SystemModel& m, CaseTag subcase, Context& ctx);

/// Input change (a2*u1 - a1*u2, a1*u1 + a2*u2) followed by a one-fold
/// prolongation of the first new input.
std::pair<SystemModel, std::vector<TransformStep>> case2_step(const SystemModel& m, const AlphaSolution& bc,
                                                              Context& ctx, std::vector<SystemModel>* parents = nullptr);

struct Case3Branch {
    AlphaSolution alpha;
    std::optional<SystemModel> model;
    std::vector<TransformStep> steps;
    std::vector<SystemModel> parents;  // model each step applies to
    std::string failure;  // set when the branch could not be formed
    bool inconclusive = false;
};
/// One entry per PAI solution (filtered ones included, with a failure note).
std::vector<Case3Branch> case3_step(const SystemModel& m, const std::vector<Expr>& hints, Context& ctx);

struct FlatOutputCandidate {
    std::vector<Expr> y;
    std::vector<int> R;
    int d = -1;
    bool verified = false;
    double residual = 0.0;  // largest relative rank gap seen (diagnostic)
    std::string message;
};

struct VerifyOptions {
    int max_order = -1;  // default n + 4
    int points = 0;      // default ctx samples
};
/// Numeric functional-dependence test of x and u on the jets of y along the
/// dynamics. Candidates may use states, inputs and input jets (name_dK).
FlatOutputCandidate verify_flat_output(const SystemModel& m, const std::vector<Expr>& y, Context& ctx,
                                       VerifyOptions opt = {});

/// Linearizing output of a static feedback linearizable model.
std::vector<Expr> extract_linearizing_output(const SystemModel& m, const std::vector<std::pair<Expr, Expr>>& hints,
                                             Context& ctx);

/// Expresses `e`, written in the variables of the model after `steps`, in
/// the variables of `models[0]`. models[i] is the model `steps[i]` was
/// applied to.
Expr pull_back(const Expr& e, const std::vector<SystemModel>& models, const std::vector<TransformStep>& steps);

struct TraceNode {
    SystemModel model;
    CaseTag tag = CaseTag::Inconclusive;  // what was applied at this node
    std::string label;                    // e.g. the PAI direction that led here
    std::vector<TransformStep> steps;     // from the parent's model to this one
    std::vector<SystemModel> step_parents;
    int prolongations = 0;  // along the path from the root, this node included
    int case1_count = 0;
    std::string note;
    std::vector<std::unique_ptr<TraceNode>> children;
};

enum class Verdict { Flat, NotLinearizable, Inconclusive };
const char* verdict_name(Verdict v);

struct Budget {
    int max_prolong = 2;
    int max_case1 = -1;  // default n
};

struct RunOptions {
    Budget budget;
    bool parallel = false;
    HintSet hints;
    VerifyOptions verify;
};

struct RunResult {
    Verdict verdict = Verdict::Inconclusive;
    std::unique_ptr<TraceNode> trace;
    std::vector<int> case_path;            // case numbers on the successful path
    std::vector<Expr> terminal_output;     // in the terminal model's variables
    FlatOutputCandidate output;            // pulled back to the original model
    bool not_flat_at_all = false;
    std::vector<std::string> hint_requests;
    std::string message;
};

RunResult run(const SystemModel& m, Context& ctx, const RunOptions& opt = {});

}  // namespace flatd2
