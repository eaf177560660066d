#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "popc/core.hpp"

namespace popc {

// Linear projection from configurations of a converted computer onto
// configurations of its source: pi(C) = sum_q C(q) * image[q] + offset.
struct RefinementMap {
    using Term = std::pair<StateId, std::int64_t>;
    std::vector<std::vector<Term>> image;  // indexed by new state id
    std::vector<Term> offset;

    // nullopt if some coordinate goes negative.
    std::optional<Configuration> apply(const Configuration& c) const;
};

// {newLabel: {oldLabel: coefficient}}, with the constant part under "@offset".
nlohmann::json to_json(const RefinementMap& m, const PopulationComputer& from, const PopulationComputer& to);
RefinementMap refinement_from_json(const nlohmann::json& j, const PopulationComputer& from,
                                   const PopulationComputer& to);

struct Converted {
    PopulationComputer computer;
    RefinementMap map;  // onto the input computer
};

// Removes states that no sequence of transitions can populate from I + supp(H)
// (ignoring counts), and the transitions that read them. `kept[q]` is the new
// id of old state q. Circuit inputs of removed states read as absent.
PopulationComputer trim(const PopulationComputer& p, std::vector<std::optional<StateId>>* kept = nullptr);

// Adds start flags: inputs become "*x", released by a fresh helper "[start]".
Converted preprocess(const PopulationComputer& p);

// Replaces multiway transitions by stacking, commit, transfer and execute
// chains. Requires every lhs to have at most two state types.
Converted binarise(const PopulationComputer& p);

// Binary computer with circuit output -> marked-consensus output computed by a
// resettable gadget of trackers, gate agents and a round-robin reset agent.
Converted focalise(const PopulationComputer& p);

// Liberates helpers from doubled inputs: x, x -> x', up. Inputs are the
// unprimed input states; their primed partners carry the suffix "'".
Converted autarkify(const PopulationComputer& p);

// Opinion/token layer on top of a helper-free binary computer with marked
// consensus output. States are (q, opinion, token), numbered 4q + 2o + k.
class DistributedProtocol final : public PairProtocol {
public:
    explicit DistributedProtocol(PopulationComputer base);

    std::size_t state_count() const override { return 4 * base_.state_count(); }
    std::string state_label(StateId q) const override;
    std::optional<std::pair<StateId, StateId>> interact(StateId a, StateId b) const override;
    Verdict output(const std::vector<StateId>& support) const override;
    std::vector<StateId> input_states() const override;

    const PopulationComputer& base() const { return base_; }
    static StateId encode(StateId q, int opinion, int token) { return 4 * q + 2 * opinion + token; }
    static StateId base_of(StateId s) { return s / 4; }
    static int opinion_of(StateId s) { return (s >> 1) & 1; }
    static int token_of(StateId s) { return s & 1; }

    // Explicit computer with consensus output. Only sensible for small bases.
    PopulationComputer materialize() const;

private:
    PopulationComputer base_;
    std::unordered_map<std::uint64_t, std::pair<StateId, StateId>> rules_;
    std::vector<std::int8_t> mark_;  // -1 unmarked, else the marked value
};

// |Q| + |H| + gates.
std::size_t adjusted_size(const PopulationComputer& p);

enum class PipelineMode { fast, full };

struct StageReport {
    std::string name;
    std::size_t states = 0;
    std::size_t transitions = 0;
    Count helpers = 0;
    std::size_t size = 0;           // total_size
    std::size_t adjusted = 0;       // adjusted_size
    std::vector<std::string> problems;  // validation findings
};

struct PipelineReport {
    std::vector<StageReport> stages;
    Count min_input = 0;  // |I| + 2|H| at autarkify
    std::size_t protocol_states = 0;
    bool ok() const;
};

nlohmann::json to_json(const PipelineReport& r);

struct PipelineStage {
    std::string name;
    PopulationComputer computer;
    std::optional<RefinementMap> map;  // onto the previous stage
};

struct PipelineResult {
    std::vector<PipelineStage> stages;  // input computer first
    std::shared_ptr<DistributedProtocol> protocol;
    PipelineReport report;
};

// Throws std::invalid_argument naming the failing stage.
PipelineResult run_pipeline(const PopulationComputer& p, PipelineMode mode);

struct RefinementCheck {
    bool ok = true;
    std::size_t runs = 0;
    std::size_t steps = 0;
    std::vector<std::string> violations;
};

// Samples runs of `next` under a uniformly random choice among enabled
// transitions. Each step must map to a stutter or a single step of `prev`;
// each terminal configuration must map to a terminal configuration of `prev`
// with the same output; each initial configuration must map to an initial one
// agreeing on inputs. Inputs are drawn with up to `max_input` agents per input.
RefinementCheck check_refinement(const PopulationComputer& prev, const PopulationComputer& next,
                                 const RefinementMap& pi, std::size_t runs, std::uint64_t seed,
                                 Count max_input = 3, std::size_t max_steps = 200000);

}  // namespace popc
