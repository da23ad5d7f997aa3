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

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "deir/env/grid_world.hpp"

using namespace deir::env;

namespace {

constexpr std::array<Task, 7> kAllTasks{Task::FourRooms, Task::MultiRoomN2S4, Task::MultiRoomN4S5, Task::MultiRoomN6,
                                        Task::MultiRoomN30, Task::DoorKey8,      Task::DoorKey16};

// Walled box with an empty interior, agent in the middle facing east.
GridWorld open_box(int size, int max_steps = 100) {
  GridWorld w(size, size, max_steps);
  for (int i = 0; i < size; ++i) {
    w.at(i, 0) = wall_cell();
    w.at(i, size - 1) = wall_cell();
    w.at(0, i) = wall_cell();
    w.at(size - 1, i) = wall_cell();
  }
  w.agent_pos = {size / 2, size / 2};
  w.agent_dir = Direction::East;
  return w;
}

int count_objects(const GridWorld& w, Object o) {
  return static_cast<int>(std::count_if(w.cells.begin(), w.cells.end(), [o](const Cell& c) { return c.object == o; }));
}

bool agent_cell_valid(const GridWorld& w) {
  const Cell& c = w.at(w.agent_pos);
  return c.object != Object::Wall && !(c.is_door() && !c.is_open_door());
}

}  // namespace

TEST_CASE("task names round trip") {
  for (Task t : kAllTasks) CHECK(parse_task(task_name(t)) == t);
  CHECK(parse_task("MultiRoom-N2-S4") == Task::MultiRoomN2S4);
  CHECK(parse_task("DoorKey-8x8") == Task::DoorKey8);
  CHECK_THROWS_AS(parse_task("KeyCorridor"), std::invalid_argument);
}

TEST_CASE("spec validation") {
  EnvSpec s;
  CHECK_NOTHROW(s.validate());
  s.view_size = 5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = EnvSpec{};
  s.noise_sigma = -0.1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = EnvSpec{};
  s.time_penalty_coef = 1.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("MultiRoom-N2-S4 layout") {
  EnvSpec spec{Task::MultiRoomN2S4};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GridWorld w = generate(spec, seed);
    CHECK(w.width == 25);
    CHECK(w.height == 25);
    CHECK(count_objects(w, Object::Door) == 1);
    CHECK(count_objects(w, Object::Goal) == 1);
    for (const Cell& c : w.cells)
      if (c.is_door()) CHECK(c.state == DoorState::Closed);
    // Each 4x4 room (walls included) has 4 interior cells; two rooms.
    const int interior = count_objects(w, Object::Empty) + count_objects(w, Object::Goal);
    CHECK(interior >= 8);
    CHECK(w.max_steps == 40);
    CHECK(agent_cell_valid(w));
  }
}

TEST_CASE("DoorKey-8x8 layout") {
  EnvSpec spec{Task::DoorKey8};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GridWorld w = generate(spec, seed);
    CHECK(w.width == 8);
    CHECK(w.at(6, 6).object == Object::Goal);
    int doors = 0;
    int split = -1;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (w.at(x, y).is_door()) {
          ++doors;
          split = x;
          CHECK(w.at(x, y).state == DoorState::Locked);
        }
    CHECK(doors == 1);
    int keys_left = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < split; ++x) keys_left += w.at(x, y).object == Object::Key;
    CHECK(keys_left == 1);
    CHECK(w.agent_pos.x < split);
  }
}

TEST_CASE("generation is deterministic") {
  for (Task t : kAllTasks) {
    EnvSpec spec{t};
    CHECK(generate(spec, 42) == generate(spec, 42));
  }
}

TEST_CASE("every task is solvable for 1000 seeds") {
  for (Task t : kAllTasks) {
    EnvSpec spec{t};
    int solved = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      GridWorld w = generate(spec, seed);
      auto plan = solve(w);
      if (!plan) continue;
      // Replay the plan on the real dynamics with an unlimited budget.
      GridWorld replay = w;
      replay.max_steps = 1 << 30;
      StepResult r;
      for (Action a : *plan) r = step(replay, a, spec);
      solved += r.reached_goal;
    }
    INFO("task ", task_name(t));
    CHECK(solved == 1000);
  }
}

TEST_CASE("forward into a wall leaves the agent in place") {
  GridWorld w = open_box(5);
  w.agent_pos = {3, 2};
  EnvSpec spec;
  StepResult r = step(w, Action::Forward, spec);
  CHECK(w.agent_pos == Position{3, 2});
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);
}

TEST_CASE("goal reward carries the time penalty") {
  GridWorld w = open_box(5, 600);
  w.agent_pos = {2, 2};
  w.at(3, 2) = goal_cell();
  w.step_count = 99;
  StepResult r = step(w, Action::Forward, EnvSpec{});
  CHECK(r.done);
  CHECK(r.reached_goal);
  CHECK(r.reward == doctest::Approx(0.85).epsilon(1e-12));
  CHECK_THROWS_AS(step(w, Action::Forward, EnvSpec{}), ContractError);
}

TEST_CASE("MultiRoom-N30 times out after 600 steps with zero reward") {
  EnvSpec spec{Task::MultiRoomN30};
  GridWorld w = generate(spec, 3);
  CHECK(w.max_steps == 600);
  StepResult r;
  for (int i = 0; i < 600; ++i) {
    REQUIRE_FALSE(r.done);
    r = step(w, Action::Done, spec);
  }
  CHECK(r.done);
  CHECK(r.reward == 0.0);
  CHECK(w.step_count == 600);
}

TEST_CASE("occlusion behind a wall one cell ahead") {
  GridWorld w = open_box(9);
  w.agent_pos = {4, 6};
  w.agent_dir = Direction::North;
  for (int x = 1; x < 8; ++x) w.at(x, 5) = wall_cell();
  EnvSpec spec;
  Observation o = observe(w, spec);
  // Row directly ahead of the agent (view row 5) is the wall.
  for (int x = 0; x < 7; ++x) CHECK(o.cell(x, 5).object == Object::Wall);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) CHECK(o.cell(x, y).object == Object::Unseen);
  CHECK(o.cell(3, 6).object == Object::Agent);
  CHECK(o == observe(w, spec));
}

TEST_CASE("view 3 is the center-bottom crop of view 7") {
  EnvSpec s7{Task::FourRooms};
  EnvSpec s3 = s7;
  s3.view_size = 3;
  std::mt19937_64 rng(5);
  for (Task t : kAllTasks) {
    s7.task = s3.task = t;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      GridWorld w = generate(s7, seed);
      for (int k = 0; k < 30 && !w.terminal; ++k) {
        const Observation o7 = observe(w, s7);
        const Observation o3 = observe(w, s3);
        CHECK(o3.cell(1, 2) == o7.cell(3, 6));
        for (int y = 0; y < 3; ++y)
          for (int x = 0; x < 3; ++x) CHECK(o3.cell(x, y) == o7.cell(x + 2, y + 4));
        step(w, static_cast<Action>(rng() % 6), s7);
      }
    }
  }
}

TEST_CASE("noiseless observations stay within enum ranges") {
  EnvSpec spec{Task::DoorKey8};
  GridWorld w = generate(spec, 1);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200 && !w.terminal; ++k) {
    Observation o = observe(w, spec);
    for (std::size_t i = 0; i < o.size(); i += 3) {
      CHECK(o.data[i] <= kMaxObjectIndex);
      CHECK(o.data[i + 1] <= kMaxColorIndex);
      CHECK(o.data[i + 2] <= kMaxStateIndex);
    }
    step(w, static_cast<Action>(rng() % 6), spec);
  }
}

TEST_CASE("noise application") {
  GridWorld w = generate(EnvSpec{Task::MultiRoomN2S4}, 0);
  Observation o = observe(w, EnvSpec{});
  std::mt19937_64 rng(3);
  CHECK(apply_noise(o, 0.0, 0.0, rng) == normalize(o));
  CHECK_THROWS_AS(apply_noise(o, 0.0, -1.0, rng), std::invalid_argument);

  const double mu = 0.05;
  const double sigma = 0.1;
  const auto base = normalize(o);
  double total = 0.0;
  std::size_t n = 0;
  while (n < 1'000'000) {
    const auto noisy = apply_noise(o, mu, sigma, rng);
    for (std::size_t i = 0; i < noisy.size() && n < 1'000'000; ++i, ++n) total += noisy[i] - base[i];
  }
  CHECK(std::abs(total / 1e6 - mu) < 3 * sigma / 1000.0);
}

TEST_CASE("hide_obstacles") {
  Observation plain(3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) plain.set_cell(x, y, door_cell(Color::Green, DoorState::Closed));
  plain.set_cell(1, 2, Cell{Object::Agent, Color::Red, DoorState::None});
  CHECK(hide_obstacles(plain) == plain);

  GridWorld w = open_box(5);
  w.agent_pos = {3, 2};
  EnvSpec spec;
  spec.invisible_obstacles = true;
  Observation o = hide_obstacles(observe(w, spec));
  const Cell ahead = o.cell(3, 5);
  CHECK(ahead.object == Object::Empty);
  CHECK(ahead.color == Color::Blue);
  StepResult r = step(w, Action::Forward, spec);
  CHECK(w.agent_pos == Position{3, 2});
  CHECK(r.observation == o);
  CHECK(hide_obstacles(o) == o);
}

TEST_CASE("state id semantics") {
  GridWorld w = generate(EnvSpec{Task::MultiRoomN2S4}, 9);
  const StateId id = state_id(w);
  CHECK(state_id(w) == id);
  GridWorld turned = w;
  step(turned, Action::TurnLeft, EnvSpec{});
  CHECK(state_id(turned) != id);
  step(turned, Action::TurnRight, EnvSpec{});
  CHECK(state_id(turned) == id);
  CHECK(turned.step_count == 2);

  GridWorld box = open_box(5);
  box.at(3, 2) = door_cell(Color::Red, DoorState::Closed);
  GridWorld opened = box;
  step(opened, Action::Toggle, EnvSpec{});
  REQUIRE(opened.at(3, 2).state != box.at(3, 2).state);
  CHECK(state_id(opened) != state_id(box));
}

TEST_CASE("modifiers leave the ground truth untouched") {
  EnvSpec base{Task::MultiRoomN4S5};
  EnvSpec modified = base;
  modified.noise_sigma = 0.1;
  modified.invisible_obstacles = true;
  Environment a(base, 77);
  Environment b(modified, 77);
  Environment c(base, 77);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 500; ++k) {
    const auto act = static_cast<Action>(rng() % 7);
    StepResult ra = a.step(act);
    StepResult rb = b.step(act);
    StepResult rc = c.step(act);
    CHECK(state_id(a.world()) == state_id(b.world()));
    CHECK(ra.reward == rb.reward);
    CHECK(ra.done == rb.done);
    CHECK(a.input() == c.input());
    if (ra.done) {
      a.reset();
      b.reset();
      c.reset();
    }
  }
}

TEST_CASE("environment state round trips through text") {
  EnvSpec spec{Task::DoorKey8};
  spec.noise_sigma = 0.1;
  Environment a(spec, 11);
  std::mt19937_64 rng(6);
  for (int k = 0; k < 37; ++k) a.step(static_cast<Action>(rng() % 6));
  Environment b(spec, 999);
  b.deserialize(a.serialize());
  CHECK(b.world() == a.world());
  CHECK(b.input() == a.input());
  for (int k = 0; k < 50; ++k) {
    const auto act = static_cast<Action>(rng() % 6);
    StepResult ra = a.step(act);
    StepResult rb = b.step(act);
    CHECK(a.input() == b.input());
    if (ra.done) {
      a.reset();
      b.reset();
    }
  }
  CHECK_THROWS(b.deserialize("garbage"));
}

TEST_CASE("ascii render marks the agent") {
  GridWorld w = open_box(5);
  const std::string s = render_ascii(w);
  CHECK(s.size() == 30);
  CHECK(s[2 * 6 + 2] == '>');
  CHECK(s[0] == '#');
}

TEST_CASE("exhausted layout budget raises a generation error") {
  EnvSpec spec{Task::MultiRoomN30};
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    try {
      generate(spec, seed, 1);
    } catch (const GenerationError&) {
      ++failures;
    }
  }
  CHECK(failures > 0);
  CHECK_THROWS_AS(generate(spec, 0, 0), std::invalid_argument);
}
