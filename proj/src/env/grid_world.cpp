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

#include "deir/env/grid_world.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_set>

namespace deir::env {
namespace {

constexpr int kMaxPlacementTries = 10000;

class LayoutRng {
 public:
  explicit LayoutRng(std::uint64_t seed) : engine_(seed) {}
  // Uniform integer in [lo, hi).
  int integer(int lo, int hi) {
    if (hi <= lo) throw GenerationError("empty sampling range");
    return std::uniform_int_distribution<int>(lo, hi - 1)(engine_);
  }
  template <typename T>
  T element(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(integer(0, static_cast<int>(items.size())))];
  }

 private:
  std::mt19937_64 engine_;
};

struct Room {
  Position top;
  Position size;
  Position entry_door;
};

struct MultiRoomParams {
  int num_rooms;
  int max_room_size;
  int grid_size;
};

MultiRoomParams multiroom_params(Task task) {
  switch (task) {
    case Task::MultiRoomN2S4: return {2, 4, 25};
    case Task::MultiRoomN4S5: return {4, 5, 25};
    case Task::MultiRoomN6: return {6, 10, 25};
    case Task::MultiRoomN30: return {30, 10, 45};
    default: throw std::invalid_argument("not a MultiRoom task");
  }
}

void horizontal_wall(GridWorld& w, int x, int y, int length) {
  for (int i = 0; i < length; ++i) w.at(x + i, y) = wall_cell();
}
void vertical_wall(GridWorld& w, int x, int y, int length) {
  for (int j = 0; j < length; ++j) w.at(x, y + j) = wall_cell();
}

// Rejection-samples an empty cell inside [top, top + size).
Position sample_empty(const GridWorld& w, LayoutRng& rng, Position top, Position size,
                      std::optional<Position> exclude = std::nullopt) {
  const int x0 = std::max(top.x, 0);
  const int y0 = std::max(top.y, 0);
  const int x1 = std::min(top.x + size.x, w.width);
  const int y1 = std::min(top.y + size.y, w.height);
  for (int tries = 0; tries < kMaxPlacementTries; ++tries) {
    Position p{rng.integer(x0, x1), rng.integer(y0, y1)};
    if (w.at(p).object != Object::Empty) continue;
    if (exclude && *exclude == p) continue;
    return p;
  }
  throw GenerationError("could not place object");
}

void place_agent(GridWorld& w, LayoutRng& rng, Position top, Position size) {
  w.agent_pos = sample_empty(w, rng, top, size);
  w.agent_dir = static_cast<Direction>(rng.integer(0, 4));
}

Position place_object(GridWorld& w, LayoutRng& rng, const Cell& cell, Position top, Position size) {
  Position p = sample_empty(w, rng, top, size, w.agent_pos);
  w.at(p) = cell;
  return p;
}

// Recursive room placement, mirroring MiniGrid's MultiRoom generator.
bool place_room(LayoutRng& rng, int width, int height, int num_left, std::vector<Room>& rooms,
                int min_size, int max_size, int entry_wall, Position entry) {
  const int sx = rng.integer(min_size, max_size + 1);
  const int sy = rng.integer(min_size, max_size + 1);
  int tx = 0;
  int ty = 0;
  if (rooms.empty()) {
    tx = entry.x;
    ty = entry.y;
  } else if (entry_wall == 0) {
    tx = entry.x - sx + 1;
    ty = rng.integer(entry.y - sy + 2, entry.y);
  } else if (entry_wall == 1) {
    tx = rng.integer(entry.x - sx + 2, entry.x);
    ty = entry.y - sy + 1;
  } else if (entry_wall == 2) {
    tx = entry.x;
    ty = rng.integer(entry.y - sy + 2, entry.y);
  } else {
    tx = rng.integer(entry.x - sx + 2, entry.x);
    ty = entry.y;
  }
  if (tx < 0 || ty < 0) return false;
  if (tx + sx > width || ty + sy >= height) return false;
  for (std::size_t i = 0; i + 1 < rooms.size(); ++i) {
    const Room& r = rooms[i];
    const bool disjoint = tx + sx < r.top.x || r.top.x + r.size.x <= tx || ty + sy < r.top.y ||
                          r.top.y + r.size.y <= ty;
    if (!disjoint) return false;
  }
  rooms.push_back(Room{{tx, ty}, {sx, sy}, entry});
  if (num_left == 1) return true;

  for (int attempt = 0; attempt < 8; ++attempt) {
    std::vector<int> walls;
    for (int wall = 0; wall < 4; ++wall)
      if (wall != entry_wall) walls.push_back(wall);
    const int exit_wall = rng.element(walls);
    const int next_entry_wall = (exit_wall + 2) % 4;
    Position exit;
    switch (exit_wall) {
      case 0: exit = {tx + sx - 1, ty + rng.integer(1, sy - 1)}; break;
      case 1: exit = {tx + rng.integer(1, sx - 1), ty + sy - 1}; break;
      case 2: exit = {tx, ty + rng.integer(1, sy - 1)}; break;
      default: exit = {tx + rng.integer(1, sx - 1), ty}; break;
    }
    if (place_room(rng, width, height, num_left - 1, rooms, min_size, max_size, next_entry_wall,
                   exit))
      break;
  }
  return true;
}

GridWorld generate_multiroom(const EnvSpec& spec, LayoutRng& rng, int max_layouts) {
  const MultiRoomParams params = multiroom_params(spec.task);
  const int size = params.grid_size;
  std::vector<Room> rooms;
  for (int attempt = 0; attempt < max_layouts && static_cast<int>(rooms.size()) < params.num_rooms; ++attempt) {
    std::vector<Room> candidate;
    Position entry{rng.integer(0, size - 2), rng.integer(0, size - 2)};
    place_room(rng, size, size, params.num_rooms, candidate, 4, params.max_room_size, 2, entry);
    if (candidate.size() > rooms.size()) rooms = std::move(candidate);
  }
  if (static_cast<int>(rooms.size()) < params.num_rooms)
    throw GenerationError("room packing failed after " + std::to_string(max_layouts) + " layouts");

  GridWorld w(size, size, spec.effective_max_steps(), spec.time_penalty_coef);
  std::optional<Color> previous_color;
  for (std::size_t idx = 0; idx < rooms.size(); ++idx) {
    const Room& room = rooms[idx];
    horizontal_wall(w, room.top.x, room.top.y, room.size.x);
    horizontal_wall(w, room.top.x, room.top.y + room.size.y - 1, room.size.x);
    vertical_wall(w, room.top.x, room.top.y, room.size.y);
    vertical_wall(w, room.top.x + room.size.x - 1, room.top.y, room.size.y);
    if (idx > 0) {
      std::vector<Color> colors;
      for (int c = 0; c < kNumColors; ++c)
        if (!previous_color || static_cast<int>(*previous_color) != c) colors.push_back(static_cast<Color>(c));
      const Color color = rng.element(colors);
      w.at(room.entry_door) = door_cell(color, DoorState::Closed);
      previous_color = color;
    }
  }
  place_agent(w, rng, rooms.front().top, rooms.front().size);
  place_object(w, rng, goal_cell(), rooms.back().top, rooms.back().size);
  return w;
}

GridWorld generate_doorkey(const EnvSpec& spec, LayoutRng& rng) {
  const int size = spec.task == Task::DoorKey8 ? 8 : 16;
  GridWorld w(size, size, spec.effective_max_steps(), spec.time_penalty_coef);
  horizontal_wall(w, 0, 0, size);
  horizontal_wall(w, 0, size - 1, size);
  vertical_wall(w, 0, 0, size);
  vertical_wall(w, size - 1, 0, size);
  w.at(size - 2, size - 2) = goal_cell();
  const int split = rng.integer(2, size - 2);
  vertical_wall(w, split, 0, size);
  place_agent(w, rng, {0, 0}, {split, size});
  const int door = rng.integer(1, size - 2);
  w.at(split, door) = door_cell(Color::Yellow, DoorState::Locked);
  place_object(w, rng, key_cell(Color::Yellow), {0, 0}, {split, size});
  return w;
}

GridWorld generate_fourrooms(const EnvSpec& spec, LayoutRng& rng) {
  const int size = 19;
  GridWorld w(size, size, spec.effective_max_steps(), spec.time_penalty_coef);
  horizontal_wall(w, 0, 0, size);
  horizontal_wall(w, 0, size - 1, size);
  vertical_wall(w, 0, 0, size);
  vertical_wall(w, size - 1, 0, size);
  const int room = size / 2;
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const int left = i * room;
      const int top = j * room;
      if (i + 1 < 2) {
        vertical_wall(w, left + room, top, room);
        w.at(left + room, rng.integer(top + 1, top + room)) = kEmptyCell;
      }
      if (j + 1 < 2) {
        horizontal_wall(w, left, top + room, room);
        w.at(rng.integer(left + 1, left + room), top + room) = kEmptyCell;
      }
    }
  }
  place_agent(w, rng, {0, 0}, {size, size});
  place_object(w, rng, goal_cell(), {0, 0}, {size, size});
  return w;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= h >> 31;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 29;
  return h;
}

Direction rotate(Direction d, int by) { return static_cast<Direction>((static_cast<int>(d) + by + 4) % 4); }

}  // namespace

std::string_view task_name(Task task) {
  switch (task) {
    case Task::FourRooms: return "FourRooms";
    case Task::MultiRoomN2S4: return "MultiRoomN2S4";
    case Task::MultiRoomN4S5: return "MultiRoomN4S5";
    case Task::MultiRoomN6: return "MultiRoomN6";
    case Task::MultiRoomN30: return "MultiRoomN30";
    case Task::DoorKey8: return "DoorKey8";
    case Task::DoorKey16: return "DoorKey16";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_') key.push_back(c);
  if (key == "FourRooms") return Task::FourRooms;
  if (key == "MultiRoomN2S4") return Task::MultiRoomN2S4;
  if (key == "MultiRoomN4S5") return Task::MultiRoomN4S5;
  if (key == "MultiRoomN6") return Task::MultiRoomN6;
  if (key == "MultiRoomN30") return Task::MultiRoomN30;
  if (key == "DoorKey8" || key == "DoorKey8x8") return Task::DoorKey8;
  if (key == "DoorKey16" || key == "DoorKey16x16") return Task::DoorKey16;
  throw std::invalid_argument("unknown task: " + std::string(name));
}

int default_max_steps(Task task) {
  switch (task) {
    case Task::FourRooms: return 100;
    case Task::MultiRoomN2S4: return 20 * 2;
    case Task::MultiRoomN4S5: return 20 * 4;
    case Task::MultiRoomN6: return 20 * 6;
    case Task::MultiRoomN30: return 20 * 30;
    case Task::DoorKey8: return 10 * 8 * 8;
    case Task::DoorKey16: return 10 * 16 * 16;
  }
  return 1;
}

void EnvSpec::validate() const {
  if (view_size != 3 && view_size != 7) throw std::invalid_argument("view_size must be 3 or 7");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be positive");
  if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
  if (time_penalty_coef < 0.0 || time_penalty_coef > 1.0)
    throw std::invalid_argument("time_penalty_coef must lie in [0, 1]");
}

int EnvSpec::effective_max_steps() const { return max_steps > 0 ? max_steps : default_max_steps(task); }

Position direction_vector(Direction dir) {
  switch (dir) {
    case Direction::East: return {1, 0};
    case Direction::South: return {0, 1};
    case Direction::West: return {-1, 0};
    case Direction::North: return {0, -1};
  }
  return {0, 0};
}

GridWorld::GridWorld(int w, int h, int max_steps_, double penalty)
    : width(w), height(h), cells(static_cast<std::size_t>(w * h)), max_steps(max_steps_),
      time_penalty_coef(penalty) {}

Position GridWorld::front_pos() const {
  const Position d = direction_vector(agent_dir);
  return {agent_pos.x + d.x, agent_pos.y + d.y};
}

Cell Observation::cell(int x, int y) const {
  const auto i = static_cast<std::size_t>((y * view + x) * 3);
  return {static_cast<Object>(data[i]), static_cast<Color>(data[i + 1]), static_cast<DoorState>(data[i + 2])};
}

void Observation::set_cell(int x, int y, const Cell& c) {
  const auto i = static_cast<std::size_t>((y * view + x) * 3);
  data[i] = static_cast<std::uint8_t>(c.object);
  data[i + 1] = static_cast<std::uint8_t>(c.color);
  data[i + 2] = static_cast<std::uint8_t>(c.state);
}

int default_layout_budget(Task task) { return task == Task::MultiRoomN30 ? 100'000 : 100; }

GridWorld generate(const EnvSpec& spec, std::uint64_t seed) {
  return generate(spec, seed, default_layout_budget(spec.task));
}

GridWorld generate(const EnvSpec& spec, std::uint64_t seed, int max_layouts) {
  spec.validate();
  if (max_layouts < 1) throw std::invalid_argument("layout budget must be positive");
  LayoutRng rng(seed);
  switch (spec.task) {
    case Task::FourRooms: return generate_fourrooms(spec, rng);
    case Task::DoorKey8:
    case Task::DoorKey16: return generate_doorkey(spec, rng);
    default: return generate_multiroom(spec, rng, max_layouts);
  }
}

namespace {

// World dynamics without rendering; shared by step() and the solver.
StepResult advance(GridWorld& world, Action action) {
  if (world.terminal) throw ContractError("step() called on a terminal world");
  StepResult result;
  world.step_count += 1;
  const Position front = world.front_pos();
  const bool front_valid = world.in_bounds(front);
  switch (action) {
    case Action::TurnLeft: world.agent_dir = rotate(world.agent_dir, -1); break;
    case Action::TurnRight: world.agent_dir = rotate(world.agent_dir, 1); break;
    case Action::Forward:
      if (front_valid && world.at(front).can_overlap()) {
        world.agent_pos = front;
        if (world.at(front).object == Object::Goal) {
          result.done = true;
          result.reached_goal = true;
          result.reward = 1.0 - world.time_penalty_coef *
                                    (static_cast<double>(world.step_count) / world.max_steps);
        }
      }
      break;
    case Action::Pickup:
      if (front_valid && world.at(front).can_pickup() && !world.carried) {
        world.carried = world.at(front);
        world.at(front) = kEmptyCell;
      }
      break;
    case Action::Drop:
      if (front_valid && world.at(front).object == Object::Empty && world.carried) {
        world.at(front) = *world.carried;
        world.carried.reset();
      }
      break;
    case Action::Toggle:
      if (front_valid && world.at(front).is_door()) {
        Cell& door = world.at(front);
        if (door.state == DoorState::Locked) {
          if (world.carried && world.carried->object == Object::Key && world.carried->color == door.color)
            door.state = DoorState::Open;
        } else {
          door.state = door.state == DoorState::Open ? DoorState::Closed : DoorState::Open;
        }
      }
      break;
    case Action::Done: break;
  }
  if (world.step_count >= world.max_steps) result.done = true;
  world.terminal = result.done;
  return result;
}

}  // namespace

StepResult step(GridWorld& world, Action action, const EnvSpec& spec) {
  StepResult result = advance(world, action);
  result.observation = observe(world, spec);
  if (spec.invisible_obstacles) result.observation = hide_obstacles(result.observation);
  return result;
}

Observation observe(const GridWorld& world, const EnvSpec& spec) {
  // Always render the 7x7 view; the 3x3 view is its center-bottom crop.
  constexpr int kView = 7;
  constexpr int kCenter = kView / 2;
  const Position fwd = direction_vector(world.agent_dir);
  const Position right{-fwd.y, fwd.x};

  std::array<Cell, kView * kView> view{};
  std::array<bool, kView * kView> opaque_outside{};
  for (int vy = 0; vy < kView; ++vy) {
    for (int vx = 0; vx < kView; ++vx) {
      const int ahead = kView - 1 - vy;
      const int lateral = vx - kCenter;
      const Position p{world.agent_pos.x + ahead * fwd.x + lateral * right.x,
                       world.agent_pos.y + ahead * fwd.y + lateral * right.y};
      const int idx = vy * kView + vx;
      if (world.in_bounds(p)) {
        view[idx] = world.at(p);
      } else {
        view[idx] = wall_cell();
        opaque_outside[idx] = true;
      }
    }
  }
  const int agent_idx = (kView - 1) * kView + kCenter;
  view[agent_idx] = world.carried ? *world.carried : Cell{Object::Agent, Color::Red, DoorState::None};

  std::array<bool, kView * kView> visible{};
  visible[agent_idx] = true;
  for (int j = kView - 1; j >= 0; --j) {
    for (int i = 0; i < kView - 1; ++i) {
      if (!visible[j * kView + i] || !view[j * kView + i].see_behind()) continue;
      visible[j * kView + i + 1] = true;
      if (j > 0) {
        visible[(j - 1) * kView + i + 1] = true;
        visible[(j - 1) * kView + i] = true;
      }
    }
    for (int i = kView - 1; i > 0; --i) {
      if (!visible[j * kView + i] || !view[j * kView + i].see_behind()) continue;
      visible[j * kView + i - 1] = true;
      if (j > 0) {
        visible[(j - 1) * kView + i - 1] = true;
        visible[(j - 1) * kView + i] = true;
      }
    }
  }

  const int out_view = spec.view_size;
  const int offset_x = kCenter - out_view / 2;
  const int offset_y = kView - out_view;
  Observation obs(out_view);
  for (int y = 0; y < out_view; ++y) {
    for (int x = 0; x < out_view; ++x) {
      const int idx = (y + offset_y) * kView + (x + offset_x);
      if (visible[idx] && !opaque_outside[idx])
        obs.set_cell(x, y, view[idx]);
      else
        obs.set_cell(x, y, Cell{Object::Unseen, Color::Red, DoorState::None});
    }
  }
  return obs;
}

Observation hide_obstacles(const Observation& obs) {
  Observation out = obs;
  for (int y = 0; y < obs.view; ++y) {
    for (int x = 0; x < obs.view; ++x) {
      Cell c = obs.cell(x, y);
      if (c.object == Object::Wall) c.object = Object::Empty;
      if (c.object == Object::Unseen || c.object == Object::Empty) c.color = Color::Blue;
      out.set_cell(x, y, c);
    }
  }
  return out;
}

std::vector<float> normalize(const Observation& obs) {
  constexpr std::array<float, 3> scale{1.0f / kMaxObjectIndex, 1.0f / kMaxColorIndex, 1.0f / kMaxStateIndex};
  std::vector<float> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) out[i] = static_cast<float>(obs.data[i]) * scale[i % 3];
  return out;
}

std::vector<float> apply_noise(const Observation& obs, double mu, double sigma, std::mt19937_64& rng) {
  if (sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
  std::vector<float> out = normalize(obs);
  if (sigma == 0.0 && mu == 0.0) return out;
  if (sigma == 0.0) {
    for (float& v : out) v = static_cast<float>(v + mu);
    return out;
  }
  std::normal_distribution<double> noise(mu, sigma);
  for (float& v : out) v = static_cast<float>(v + noise(rng));
  return out;
}

StateId state_id(const GridWorld& world) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  h = mix(h, static_cast<std::uint64_t>(world.agent_pos.x) << 32 | static_cast<std::uint32_t>(world.agent_pos.y));
  h = mix(h, static_cast<std::uint64_t>(world.agent_dir));
  if (world.carried)
    h = mix(h, 0x100u | static_cast<std::uint64_t>(world.carried->object) << 8 |
                   static_cast<std::uint64_t>(world.carried->color));
  for (std::size_t i = 0; i < world.cells.size(); ++i) {
    const Cell& c = world.cells[i];
    if (c.is_door() || c.can_pickup()) {
      h = mix(h, i << 24 | static_cast<std::uint64_t>(c.object) << 16 |
                     static_cast<std::uint64_t>(c.color) << 8 | static_cast<std::uint64_t>(c.state));
    }
  }
  return h;
}

std::string render_ascii(const GridWorld& world) {
  std::string out;
  for (int y = 0; y < world.height; ++y) {
    for (int x = 0; x < world.width; ++x) {
      if (world.agent_pos == Position{x, y}) {
        constexpr std::array<char, 4> arrows{'>', 'v', '<', '^'};
        out.push_back(arrows[static_cast<std::size_t>(world.agent_dir)]);
        continue;
      }
      const Cell& c = world.at(x, y);
      switch (c.object) {
        case Object::Wall: out.push_back('#'); break;
        case Object::Goal: out.push_back('G'); break;
        case Object::Key: out.push_back('K'); break;
        case Object::Ball: out.push_back('O'); break;
        case Object::Box: out.push_back('B'); break;
        case Object::Floor: out.push_back(','); break;
        case Object::Door:
          out.push_back(c.state == DoorState::Open ? '/' : c.state == DoorState::Locked ? 'L' : 'D');
          break;
        default: out.push_back('.'); break;
      }
    }
    out.push_back('\n');
  }
  return out;
}

std::optional<std::vector<Action>> solve(const GridWorld& start, std::size_t max_states) {
  // Only the cells that can change are part of the search state.
  std::vector<std::size_t> mutable_cells;
  for (std::size_t i = 0; i < start.cells.size(); ++i)
    if (start.cells[i].is_door() || start.cells[i].can_pickup()) mutable_cells.push_back(i);

  struct Node {
    Position pos;
    Direction dir;
    std::optional<Cell> carried;
    std::vector<Cell> cells;
    std::int64_t parent;
    Action action;
  };
  GridWorld scratch = start;
  scratch.max_steps = 1 << 30;
  scratch.step_count = 0;
  scratch.terminal = false;

  auto key_of = [&]() {
    std::string key;
    key.reserve(8 + 3 * mutable_cells.size());
    key.push_back(static_cast<char>(scratch.agent_pos.x));
    key.push_back(static_cast<char>(scratch.agent_pos.y));
    key.push_back(static_cast<char>(scratch.agent_dir));
    key.push_back(scratch.carried ? static_cast<char>(scratch.carried->object) : '\xff');
    key.push_back(scratch.carried ? static_cast<char>(scratch.carried->color) : '\xff');
    for (std::size_t i : mutable_cells) {
      const Cell& c = scratch.cells[i];
      key.push_back(static_cast<char>(c.object));
      key.push_back(static_cast<char>(c.color));
      key.push_back(static_cast<char>(c.state));
    }
    return key;
  };

  auto load = [&](const Node& n) {
    scratch.agent_pos = n.pos;
    scratch.agent_dir = n.dir;
    scratch.carried = n.carried;
    // The solver never drops items, so only the listed cells ever change.
    for (std::size_t k = 0; k < mutable_cells.size(); ++k) scratch.cells[mutable_cells[k]] = n.cells[k];
    scratch.terminal = false;
    scratch.step_count = 0;
  };

  std::vector<Node> nodes;
  std::unordered_set<std::string> seen;
  Node root{start.agent_pos, start.agent_dir, start.carried, {}, -1, Action::Done};
  for (std::size_t i : mutable_cells) root.cells.push_back(start.cells[i]);
  nodes.push_back(root);
  seen.insert(key_of());
  std::deque<std::size_t> frontier{0};

  constexpr std::array<Action, 5> actions{Action::TurnLeft, Action::TurnRight, Action::Forward, Action::Pickup,
                                          Action::Toggle};
  while (!frontier.empty()) {
    const std::size_t current = frontier.front();
    frontier.pop_front();
    for (Action a : actions) {
      load(nodes[current]);
      const Position front = scratch.front_pos();
      if (a == Action::Toggle) {
        if (!scratch.in_bounds(front)) continue;
        const Cell& door = scratch.at(front);
        if (!door.is_door() || door.is_open_door()) continue;
      }
      StepResult r = advance(scratch, a);
      if (r.reached_goal) {
        std::vector<Action> plan{a};
        for (std::int64_t n = static_cast<std::int64_t>(current); nodes[n].parent >= 0; n = nodes[n].parent)
          plan.push_back(nodes[n].action);
        std::reverse(plan.begin(), plan.end());
        return plan;
      }
      if (!seen.insert(key_of()).second) continue;
      Node next{scratch.agent_pos, scratch.agent_dir, scratch.carried, {}, static_cast<std::int64_t>(current), a};
      for (std::size_t i : mutable_cells) next.cells.push_back(scratch.cells[i]);
      nodes.push_back(std::move(next));
      frontier.push_back(nodes.size() - 1);
      if (nodes.size() > max_states) return std::nullopt;
    }
  }
  return std::nullopt;
}

Environment::Environment(EnvSpec spec, std::uint64_t seed) : spec_(spec), layout_rng_(seed) {
  spec_.validate();
  std::seed_seq noise_seed{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6e6f6973u};
  noise_rng_.seed(noise_seed);
  reset();
}

const std::vector<float>& Environment::reset() {
  world_ = generate(spec_, layout_rng_());
  raw_ = observe(world_, spec_);
  if (spec_.invisible_obstacles) raw_ = hide_obstacles(raw_);
  refresh_observation();
  return input_;
}

void Environment::refresh_observation() {
  input_ = apply_noise(raw_, spec_.noise_mu, spec_.noise_sigma, noise_rng_);
}

StepResult Environment::step(Action action) {
  StepResult r = env::step(world_, action, spec_);
  raw_ = r.observation;
  refresh_observation();
  return r;
}

std::string Environment::serialize() const {
  std::ostringstream out;
  out << layout_rng_ << '\n' << noise_rng_ << '\n';
  out << world_.width << ' ' << world_.height << ' ' << world_.agent_pos.x << ' ' << world_.agent_pos.y << ' '
      << static_cast<int>(world_.agent_dir) << ' ' << world_.step_count << ' ' << world_.max_steps << ' '
      << (world_.terminal ? 1 : 0) << ' ' << (world_.carried ? 1 : 0) << '\n';
  if (world_.carried)
    out << static_cast<int>(world_.carried->object) << ' ' << static_cast<int>(world_.carried->color) << ' '
        << static_cast<int>(world_.carried->state) << '\n';
  for (const Cell& c : world_.cells)
    out << static_cast<int>(c.object) << ' ' << static_cast<int>(c.color) << ' ' << static_cast<int>(c.state) << ' ';
  out << '\n';
  for (float v : input_) out << std::hexfloat << v << ' ';
  return out.str();
}

void Environment::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 layout;
  std::mt19937_64 noise;
  GridWorld w;
  int dir = 0;
  int terminal = 0;
  int carrying = 0;
  in >> layout >> noise;
  in >> w.width >> w.height >> w.agent_pos.x >> w.agent_pos.y >> dir >> w.step_count >> w.max_steps >> terminal >>
      carrying;
  if (!in || w.width <= 0 || w.height <= 0) throw std::runtime_error("corrupted environment state");
  w.agent_dir = static_cast<Direction>(dir);
  w.terminal = terminal != 0;
  w.time_penalty_coef = spec_.time_penalty_coef;
  auto read_cell = [&in]() {
    int o = 0, c = 0, s = 0;
    in >> o >> c >> s;
    return Cell{static_cast<Object>(o), static_cast<Color>(c), static_cast<DoorState>(s)};
  };
  if (carrying) w.carried = read_cell();
  w.cells.resize(static_cast<std::size_t>(w.width * w.height));
  for (Cell& c : w.cells) c = read_cell();
  std::vector<float> input(static_cast<std::size_t>(input_size()));
  for (float& v : input) {
    std::string token;
    in >> token;
    v = std::strtof(token.c_str(), nullptr);
  }
  if (!in) throw std::runtime_error("corrupted environment state");
  layout_rng_ = layout;
  noise_rng_ = noise;
  world_ = std::move(w);
  raw_ = observe(world_, spec_);
  if (spec_.invisible_obstacles) raw_ = hide_obstacles(raw_);
  input_ = std::move(input);
}

}  // namespace deir::env
