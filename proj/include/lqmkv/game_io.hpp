#pragma once

#include <string>

#include "lqmkv/game.hpp"
#include "lqmkv/law.hpp"

namespace lqmkv {

/// Loads a game specification from the JSON document format described in
/// the README (dimensions, horizon, discount, x0, dynamics and cost blocks;
/// matrices row-major; omitted coefficient blocks default to zero).
/// Throws ConfigError on malformed documents and DimensionError on shape
/// violations.
GameSpec load_game(const std::string& path);
GameSpec parse_game(const std::string& json_text);
std::string game_to_json(const GameSpec& game);

/// Law profiles as JSON (per player: gain, mean_gain, intercept; constants
/// or {grid, values} paths), for exporting solved equilibria and feeding
/// perturbed candidates back into `verify`.
LawProfile load_laws(const std::string& path, const GameSpec& game);
std::string laws_to_json(const LawProfile& laws);

}  // namespace lqmkv
