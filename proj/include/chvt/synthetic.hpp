// SPDX-License-Identifier: Apache-2.0
//
// Small generated corpora for tests, demos and smoke runs.
#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chvt/corpus.hpp"

namespace chvt::synthetic {

/// Eight unrelated context/response pairs with distinct wording, small
/// enough to memorise.
inline std::vector<corpus::TextPair> overfit_pairs() {
  return {
      {"hello there , how are you ?", "i am fine , thanks ."},
      {"what time is it ?", "it is almost noon ."},
      {"where do you live ?", "i live near the river ."},
      {"do you like music ?", "yes , mostly old jazz ."},
      {"can you help me move ?", "sure , i will bring a truck ."},
      {"what did you eat today ?", "just some rice and beans ."},
      {"is it raining outside ?", "no , the sky is clear ."},
      {"who won the game ?", "the home team won again ."},
  };
}

/// Four contexts, each with three responses that share no content word.
inline std::vector<corpus::TextPair> one_to_many_pairs() {
  const std::vector<std::pair<std::string, std::vector<std::string>>> groups = {
      {"what should we eat tonight ?", {"let us order pizza .", "i could cook some pasta .", "how about fresh sushi ."}},
      {"where should we go this weekend ?",
       {"the beach sounds nice .", "we could hike the mountains .", "let us visit the museum ."}},
      {"what do you want to watch ?",
       {"a scary horror movie .", "some funny cartoons please .", "the football match is on ."}},
      {"how will you get to work ?", {"i will take the bus .", "my bike is ready .", "i am driving my car ."}},
  };
  std::vector<corpus::TextPair> out;
  for (const auto& [ctx, responses] : groups) {
    for (const auto& r : responses) out.push_back({ctx, r});
  }
  return out;
}

/// Template-built multi-turn dialogues with slot fillers. The slot values
/// recur across turns, so responses depend on their contexts.
inline std::vector<corpus::Dialogue> template_dialogues(std::size_t count, std::uint64_t seed) {
  static const std::vector<std::string> names = {"anna", "ben", "carla", "dev", "emma", "finn",
                                                 "gina", "hugo", "iris", "jack", "kate", "leo"};
  static const std::vector<std::string> foods = {"pizza", "noodles", "soup",  "salad", "tacos",  "curry",
                                                 "bread", "cheese",  "fruit", "rice",  "burgers", "cake"};
  static const std::vector<std::string> places = {"park",   "cafe", "library", "beach", "market",
                                                  "museum", "gym",  "station", "mall",  "garden"};
  static const std::vector<std::string> activities = {"play chess", "go running", "watch a film", "study",
                                                      "go shopping", "cook dinner", "read books", "paint",
                                                      "swim",        "dance"};
  static const std::vector<std::string> times = {"today", "tonight", "tomorrow", "on friday", "this weekend", "later"};
  static const std::vector<std::string> moods = {"great", "tired", "busy", "happy", "hungry", "bored"};

  std::mt19937_64 rng(seed);
  auto pick = [&rng](const std::vector<std::string>& v) -> const std::string& {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::vector<corpus::Dialogue> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string& name = pick(names);
    const std::string& food = pick(foods);
    const std::string& place = pick(places);
    const std::string& act = pick(activities);
    const std::string& when = pick(times);
    const std::string& mood = pick(moods);
    corpus::Dialogue d;
    switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
      case 0:
        d = {"hi " + name + " , do you want to " + act + " " + when + " ?",
             "i feel " + mood + " , but we can " + act + " at the " + place + " .",
             "great , the " + place + " also sells " + food + " .",
             "then let us get " + food + " at the " + place + " " + when + " ."};
        break;
      case 1:
        d = {"i am " + mood + " , what about you , " + name + " ?",
             "i am " + mood + " too , i just want " + food + " .",
             "there is good " + food + " near the " + place + " .",
             "ok , meet me at the " + place + " " + when + " ."};
        break;
      default:
        d = {"where are you going " + when + " ?", "to the " + place + " to " + act + " .",
             "can i come ? i will bring " + food + " .", "sure , everyone loves " + food + " ."};
        break;
    }
    out.push_back(std::move(d));
  }
  return out;
}

/// One JSON array of utterances per line.
inline void write_dialogues_jsonl(const std::string& path, const std::vector<corpus::Dialogue>& dialogues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& d : dialogues) out << nlohmann::json(d).dump() << '\n';
}

}  // namespace chvt::synthetic
