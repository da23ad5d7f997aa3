// Copyright 2026 The DEIR Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DEIR_ENV_GRID_WORLD_HPP_
#define DEIR_ENV_GRID_WORLD_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deir::env {

// Object, color and door-state indices follow the MiniGrid encoding.
// Index 9 (lava) is unused.
enum class Object : std::uint8_t {
  Unseen = 0,
  Empty = 1,
  Wall = 2,
  Floor = 3,
  Door = 4,
  Key = 5,
  Ball = 6,
  Box = 7,
  Goal = 8,
  Agent = 10,
};

enum class Color : std::uint8_t { Red = 0, Green = 1, Blue = 2, Purple = 3, Yellow = 4, Grey = 5 };

enum class DoorState : std::uint8_t { Open = 0, Closed = 1, Locked = 2, None = 0 };

inline constexpr int kMaxObjectIndex = 10;
inline constexpr int kMaxColorIndex = 5;
inline constexpr int kMaxStateIndex = 2;
inline constexpr int kNumColors = 6;

enum class Direction : std::uint8_t { East = 0, South = 1, West = 2, North = 3 };

enum class Action : std::uint8_t {
  TurnLeft = 0,
  TurnRight = 1,
  Forward = 2,
  Pickup = 3,
  Drop = 4,
  Toggle = 5,
  Done = 6,
};
inline constexpr int kNumActions = 7;

enum class Task : std::uint8_t {
  FourRooms,
  MultiRoomN2S4,
  MultiRoomN4S5,
  MultiRoomN6,
  MultiRoomN30,
  DoorKey8,
  DoorKey16,
};

std::string_view task_name(Task task);
/// Accepts both the enum spelling ("MultiRoomN2S4") and the MiniGrid style
/// ("MultiRoom-N2-S4", "DoorKey-8x8"). Throws std::invalid_argument.
Task parse_task(std::string_view name);

struct Cell {
  Object object = Object::Empty;
  Color color = Color::Red;
  DoorState state = DoorState::None;

  bool operator==(const Cell&) const = default;

  bool is_door() const { return object == Object::Door; }
  bool is_open_door() const { return is_door() && state == DoorState::Open; }
  bool can_overlap() const {
    return object == Object::Empty || object == Object::Floor || object == Object::Goal ||
           is_open_door();
  }
  bool can_pickup() const {
    return object == Object::Key || object == Object::Ball || object == Object::Box;
  }
  bool see_behind() const { return object != Object::Wall && !(is_door() && !is_open_door()); }
};

inline constexpr Cell kEmptyCell{};
inline Cell wall_cell() { return {Object::Wall, Color::Grey, DoorState::None}; }
inline Cell goal_cell() { return {Object::Goal, Color::Green, DoorState::None}; }
inline Cell door_cell(Color color, DoorState state) { return {Object::Door, color, state}; }
inline Cell key_cell(Color color) { return {Object::Key, color, DoorState::None}; }

struct EnvSpec {
  Task task = Task::MultiRoomN2S4;
  int view_size = 7;
  double noise_mu = 0.0;
  double noise_sigma = 0.0;
  bool invisible_obstacles = false;
  /// Zero selects the task's default episode limit.
  int max_steps = 0;
  double time_penalty_coef = 0.9;

  /// Throws std::invalid_argument when a field is outside its domain.
  void validate() const;
  int effective_max_steps() const;
};

int default_max_steps(Task task);

struct Position {
  int x = 0;
  int y = 0;
  bool operator==(const Position&) const = default;
};

Position direction_vector(Direction dir);

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Full world state. Plain value type: copying it snapshots the episode.
struct GridWorld {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;
  Position agent_pos;
  Direction agent_dir = Direction::East;
  std::optional<Cell> carried;
  int step_count = 0;
  int max_steps = 1;
  double time_penalty_coef = 0.9;
  bool terminal = false;

  GridWorld() = default;
  GridWorld(int w, int h, int max_steps_, double penalty = 0.9);

  bool in_bounds(Position p) const { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; }
  const Cell& at(Position p) const { return cells[static_cast<std::size_t>(p.y * width + p.x)]; }
  Cell& at(Position p) { return cells[static_cast<std::size_t>(p.y * width + p.x)]; }
  const Cell& at(int x, int y) const { return at(Position{x, y}); }
  Cell& at(int x, int y) { return at(Position{x, y}); }
  Position front_pos() const;

  bool operator==(const GridWorld&) const = default;
};

/// Integer observation, view x view x 3 in row-major (y, x, channel) order.
/// The agent sits at (view / 2, view - 1) looking towards row 0.
struct Observation {
  int view = 7;
  std::vector<std::uint8_t> data;

  Observation() = default;
  explicit Observation(int view_size)
      : view(view_size), data(static_cast<std::size_t>(view_size * view_size * 3), 0) {}

  std::size_t size() const { return data.size(); }
  Cell cell(int x, int y) const;
  void set_cell(int x, int y, const Cell& c);
  bool operator==(const Observation&) const = default;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  bool reached_goal = false;
};

using StateId = std::uint64_t;

/// Builds a solvable layout for the task; identical (spec, seed) yields
/// bit-identical worlds. Throws GenerationError once `max_layouts` room
/// chains have been sampled without reaching the room count.
GridWorld generate(const EnvSpec& spec, std::uint64_t seed, int max_layouts);

/// 100 layouts, except MultiRoom-N30 whose 30-room chain packs rarely.
int default_layout_budget(Task task);
GridWorld generate(const EnvSpec& spec, std::uint64_t seed);

/// Advances the world by one action in place. Throws ContractError when the
/// episode has already ended.
StepResult step(GridWorld& world, Action action, const EnvSpec& spec);

/// Egocentric crop with MiniGrid-style line-of-sight occlusion.
Observation observe(const GridWorld& world, const EnvSpec& spec);

/// Walls become empty floor-colored cells; unseen and empty cells take the
/// floor color. Only the observation changes; walls still block movement.
Observation hide_obstacles(const Observation& obs);

/// Scales channels by their maximum index into [0, 1].
std::vector<float> normalize(const Observation& obs);

/// normalized(obs) + N(mu, sigma) per element, unclipped.
std::vector<float> apply_noise(const Observation& obs, double mu, double sigma, std::mt19937_64& rng);

StateId state_id(const GridWorld& world);

/// One character per cell, agent drawn as an arrow.
std::string render_ascii(const GridWorld& world);

/// Shortest action sequence to the goal found by breadth-first search over the
/// full state (doors are only ever opened). Empty optional if unreachable.
std::optional<std::vector<Action>> solve(const GridWorld& world, std::size_t max_states = 2'000'000);

/// An environment instance: owns its world, its layout RNG and a separate
/// noise stream. Modifiers leave the ground-truth dynamics unchanged.
class Environment {
 public:
  Environment(EnvSpec spec, std::uint64_t seed);

  /// Starts a new episode and returns the processed network input.
  const std::vector<float>& reset();
  /// Processed network input of the current (or terminal) observation.
  const std::vector<float>& input() const { return input_; }
  /// Integer observation before noise; the equality key for negatives.
  const Observation& raw() const { return raw_; }
  StepResult step(Action action);

  const GridWorld& world() const { return world_; }
  const EnvSpec& spec() const { return spec_; }
  int input_size() const { return spec_.view_size * spec_.view_size * 3; }

  /// Text form of both RNG engines and the current world for checkpoints.
  std::string serialize() const;
  void deserialize(const std::string& text);

 private:
  void refresh_observation();

  EnvSpec spec_;
  std::mt19937_64 layout_rng_;
  std::mt19937_64 noise_rng_;
  GridWorld world_;
  Observation raw_;
  std::vector<float> input_;
};

}  // namespace deir::env

#endif  // DEIR_ENV_GRID_WORLD_HPP_
