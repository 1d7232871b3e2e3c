#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flatd2/flatalgo.hpp"
#include "flatd2/sampling.hpp"
#include "flatd2/system.hpp"

namespace flatd2 {

inline constexpr const char* kReportSchema = "flatd2.report/1";

/// Settings echoed into every report so a run can be reproduced.
struct RunConfig {
    std::string system_file;
    std::uint64_t seed = 20210501;
    Tolerances tol;
    int max_order = -1;  // -1: n + 4
    Budget budget;
    std::string hints_file;
    bool parallel = false;
};

/// Diagnostics of the representation tests at the root model.
struct SystemInfo {
    int n = 0;
    int m = 0;
    int input_rank = 0;
    bool ai = false;
    bool d1_involutive = false;
    int closure_dim = 0;  // dim of the involutive closure of span{b1, b2}; 0 when not AI
    int pai_candidates = 0;
    int pai_passing = 0;
    std::vector<std::string> pai_solutions;  // "(a1, a2)"; filter result appended
    bool sfl = false;
    std::vector<int> sfl_ranks;
    std::string note;
};
SystemInfo system_info(const SystemModel& m, Context& ctx);

std::string check_report_json(const SystemModel& m, const RunResult& r, const RunConfig& cfg);
std::string check_report_text(const SystemModel& m, const RunResult& r);
std::string verify_report_json(const SystemModel& m, const FlatOutputCandidate& c, const RunConfig& cfg);
std::string verify_report_text(const FlatOutputCandidate& c);
std::string info_report_json(const SystemModel& m, const SystemInfo& info, const RunConfig& cfg);
std::string info_report_text(const SystemInfo& info);

}  // namespace flatd2
