// Copyright 2026 The boxlm Authors
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

// Sequence codec: the closed vocabulary (specials + text words + 1001
// coordinate bins), whitespace tokenization, coordinate quantization, and
// the box fragment encoder/parser with its total failure taxonomy.
//
// Canonical text form: tokens joined by single spaces. Punctuation that the
// templates attach to words ("plate.", "Alright,") stays attached and is its
// own vocabulary entry; the box fragment and its closing period are emitted
// as space-separated tokens so tokenize(detokenize(ids)) == ids holds for
// every valid sequence.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxlm/common.hpp"
#include "boxlm/geometry.hpp"
#include "boxlm/lexicon.hpp"

namespace boxlm {

using TokenId = std::int32_t;

inline constexpr int kCoordBins = 1001;  // 0/1000 ... 1000/1000 inclusive

// Nearest-bin quantization, ties away from zero, clamped into range.
// 0.1234 -> 123, 0.0625 -> 63 (62.5 rounds up), 1.0 -> 1000.
inline int quantize(double v) {
  double r = std::round(v * 1000.0);
  if (r < 0.0) r = 0.0;
  if (r > 1000.0) r = 1000.0;
  return static_cast<int>(r);
}

inline double dequantize(int bin) {
  if (bin < 0 || bin >= kCoordBins)
    throw CoordOutOfRangeError("coordinate bin " + std::to_string(bin) +
                               " outside [0, 1000]");
  return static_cast<double>(bin) / 1000.0;
}

// Surface string of a coordinate bin: the shortest decimal of bin/1000
// ("0", "0.06", "0.188", "1").
inline std::string coord_surface(int bin) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(bin) / 1000.0);
  std::string s(buf);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

// ---------------------------------------------------------------------------
// Vocabulary. Fixed id layout:
//   0..5            specials (pad, bos, eos, box open/close, separator)
//   6..6+W-1        text words, sorted lexicographically (W words)
//   6+W..6+W+1000   coordinate bins 0..1000, contiguous
// The text word set is enumerated from the lexicon (every template rendered
// with every phrase any valid object state can produce, plus both preambles
// and the closing period), so the vocabulary is closed and identical for
// every dataset built from this lexicon.
// ---------------------------------------------------------------------------

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kBoxOpen = 3;
  static constexpr TokenId kBoxClose = 4;
  static constexpr TokenId kSep = 5;

  static const Vocab& instance() {
    static const Vocab v = build();
    return v;
  }

  static Vocab build() {
    Vocab v;
    v.surfaces_ = {"⟨pad⟩", "⟨bos⟩", "⟨eos⟩",
                   "⟨box⟩", "⟨/box⟩", ","};

    std::set<std::string> words;
    auto add_words = [&words](std::string_view text) {
      std::size_t i = 0;
      while (i < text.size()) {
        while (i < text.size() && text[i] == ' ') ++i;
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ') ++j;
        if (j > i) words.insert(std::string(text.substr(i, j - i)));
        i = j;
      }
    };

    add_words(preamble(PromptVariant::kSimple));
    add_words(preamble(PromptVariant::kConcrete));
    words.insert(".");  // closes every response after the box fragment

    std::set<std::string> phrases;
    for (Category cat : kAllCategories)
      for (const ObjectState& s : all_states(cat))
        for (const std::string& p : expressions_for(cat, s))
          phrases.insert(p);
    for (Task task : {Task::kDetection, Task::kAffordance})
      for (int t = 0; t < kTemplatesPerTask; ++t) {
        const DialogTemplate& tmpl = dialog_template(task, t);
        for (const std::string& phrase : phrases) {
          add_words(substitute_target(tmpl.prompt, phrase));
          add_words(substitute_target(tmpl.response_prefix, phrase));
        }
      }

    for (const std::string& w : words) {
      // std::set iterates lexicographically, giving the sorted id order.
      if (std::find(v.surfaces_.begin(), v.surfaces_.end(), w) !=
          v.surfaces_.end())
        throw ConfigError("text word collides with a reserved surface: " + w);
      v.surfaces_.push_back(w);
    }

    v.coord_base_ = static_cast<TokenId>(v.surfaces_.size());
    for (int b = 0; b < kCoordBins; ++b)
      v.surfaces_.push_back(coord_surface(b));

    for (TokenId i = 0; i < static_cast<TokenId>(v.surfaces_.size()); ++i)
      if (!v.ids_.emplace(v.surfaces_[static_cast<std::size_t>(i)], i).second)
        throw ConfigError("duplicate vocabulary surface: " +
                          v.surfaces_[static_cast<std::size_t>(i)]);
    return v;
  }

  int size() const { return static_cast<int>(surfaces_.size()); }

  TokenId id(std::string_view surface) const {
    auto it = ids_.find(std::string(surface));
    if (it == ids_.end())
      throw UnknownTokenError("token not in vocabulary: '" +
                              std::string(surface) + "'");
    return it->second;
  }

  const std::string& surface(TokenId t) const {
    if (t < 0 || t >= size())
      throw UnknownTokenError("token id out of range: " + std::to_string(t));
    return surfaces_[static_cast<std::size_t>(t)];
  }

  bool is_coord(TokenId t) const {
    return t >= coord_base_ && t < coord_base_ + kCoordBins;
  }

  int coord_bin(TokenId t) const {
    if (!is_coord(t))
      throw UnknownTokenError("not a coordinate token: " + std::to_string(t));
    return static_cast<int>(t - coord_base_);
  }

  TokenId coord_token(int bin) const {
    if (bin < 0 || bin >= kCoordBins)
      throw CoordOutOfRangeError("coordinate bin out of range: " +
                                 std::to_string(bin));
    return coord_base_ + static_cast<TokenId>(bin);
  }

  // Order-sensitive hash of all surfaces; stored in checkpoints so a model
  // can refuse to load against a different vocabulary.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const std::string& s : surfaces_) {
      h = fnv1a_64(s.data(), s.size(), h);
      h = fnv1a_64("\x1f", 1, h);
    }
    return h;
  }

 private:
  std::vector<std::string> surfaces_;
  std::map<std::string, TokenId> ids_;
  TokenId coord_base_ = 0;
};

// ---------------------------------------------------------------------------
// Tokenization.
// ---------------------------------------------------------------------------

inline std::vector<TokenId> tokenize(const Vocab& v, std::string_view text) {
  std::vector<TokenId> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' ||
                               text[i] == '\n'))
      ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' &&
           text[j] != '\n')
      ++j;
    if (j > i) out.push_back(v.id(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

inline std::string detokenize(const Vocab& v, std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += v.surface(ids[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Box fragment: [open, C(x1), sep, C(y1), sep, C(x2), sep, C(y2), close].
// ---------------------------------------------------------------------------

inline constexpr int kBoxFragmentLen = 9;

inline std::vector<TokenId> encode_box(const Vocab& v, const BoxN& b) {
  return {Vocab::kBoxOpen,
          v.coord_token(quantize(b.x1)),
          Vocab::kSep,
          v.coord_token(quantize(b.y1)),
          Vocab::kSep,
          v.coord_token(quantize(b.x2)),
          Vocab::kSep,
          v.coord_token(quantize(b.y2)),
          Vocab::kBoxClose};
}

// Total classification of a decoded sequence's box content. Every decoded
// response falls in exactly one class; everything except kOk counts as a
// localization exception (scored as IoU 0) rather than an error.
enum class ParseOutcome {
  kOk,
  kNoBox,            // no opening tag anywhere
  kUnterminatedBox,  // opening tag never closed
  kMultipleBoxes,    // more than one opening tag
  kWrongArity,       // interior isn't coord/sep/coord/... with 4 coordinates
  kNonCoordToken,    // interior contains a token that is neither coord nor sep
  kOrderViolation,   // parsed coordinates have x2 < x1 or y2 < y1
};

inline std::string_view parse_outcome_name(ParseOutcome o) {
  switch (o) {
    case ParseOutcome::kOk: return "ok";
    case ParseOutcome::kNoBox: return "no_box";
    case ParseOutcome::kUnterminatedBox: return "unterminated_box";
    case ParseOutcome::kMultipleBoxes: return "multiple_boxes";
    case ParseOutcome::kWrongArity: return "wrong_arity";
    case ParseOutcome::kNonCoordToken: return "non_coord_token";
    case ParseOutcome::kOrderViolation: return "order_violation";
  }
  return "?";
}

struct ParsedBox {
  ParseOutcome outcome = ParseOutcome::kNoBox;
  BoxN box;  // meaningful only when outcome is kOk
};

inline ParsedBox parse_box(const Vocab& v, std::span<const TokenId> seq) {
  int n_open = 0;
  std::size_t open_at = 0;
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq[i] == Vocab::kBoxOpen) {
      if (n_open++ == 0) open_at = i;
    }
  if (n_open == 0) return {ParseOutcome::kNoBox, {}};
  if (n_open > 1) return {ParseOutcome::kMultipleBoxes, {}};

  std::size_t close_at = seq.size();
  for (std::size_t i = open_at + 1; i < seq.size(); ++i)
    if (seq[i] == Vocab::kBoxClose) {
      close_at = i;
      break;
    }
  if (close_at == seq.size()) return {ParseOutcome::kUnterminatedBox, {}};

  // Interior must read coord, sep, coord, sep, coord, sep, coord.
  std::vector<int> bins;
  for (std::size_t i = open_at + 1; i < close_at; ++i) {
    TokenId t = seq[i];
    if (t != Vocab::kSep && !v.is_coord(t))
      return {ParseOutcome::kNonCoordToken, {}};
  }
  std::size_t n_interior = close_at - open_at - 1;
  if (n_interior != 7) return {ParseOutcome::kWrongArity, {}};
  for (std::size_t k = 0; k < 7; ++k) {
    TokenId t = seq[open_at + 1 + k];
    bool want_coord = k % 2 == 0;
    if (want_coord != v.is_coord(t)) return {ParseOutcome::kWrongArity, {}};
    if (want_coord) bins.push_back(v.coord_bin(t));
  }

  BoxN b{dequantize(bins[0]), dequantize(bins[1]), dequantize(bins[2]),
         dequantize(bins[3])};
  if (b.x2 < b.x1 || b.y2 < b.y1) return {ParseOutcome::kOrderViolation, b};
  return {ParseOutcome::kOk, b};
}

// ---------------------------------------------------------------------------
// Dialog rendering: canonical strings and token sequences.
// ---------------------------------------------------------------------------

struct DialogText {
  std::string prompt;
  std::string response;
};

// Canonical (tokenizable) prompt/response strings for one dialog.
inline DialogText render_dialog(const Vocab& v, Task task, int template_index,
                                std::string_view phrase, const BoxN& box) {
  const DialogTemplate& tmpl = dialog_template(task, template_index);
  DialogText out;
  out.prompt = substitute_target(tmpl.prompt, phrase);
  std::vector<TokenId> frag = encode_box(v, box);
  out.response = substitute_target(tmpl.response_prefix, phrase) + " " +
                 detokenize(v, frag) + " .";
  return out;
}

// Prompt-side tokens fed to the model: system preamble then the user turn.
inline std::vector<TokenId> prompt_tokens(const Vocab& v, PromptVariant pv,
                                          Task task, int template_index,
                                          std::string_view phrase) {
  std::vector<TokenId> ids = tokenize(v, preamble(pv));
  const DialogTemplate& tmpl = dialog_template(task, template_index);
  std::vector<TokenId> user =
      tokenize(v, substitute_target(tmpl.prompt, phrase));
  ids.insert(ids.end(), user.begin(), user.end());
  return ids;
}

// Supervised response tokens: bos, text prefix, box fragment, period, eos.
inline std::vector<TokenId> response_tokens(const Vocab& v, Task task,
                                            int template_index,
                                            std::string_view phrase,
                                            const BoxN& box) {
  std::vector<TokenId> ids = {Vocab::kBos};
  const DialogTemplate& tmpl = dialog_template(task, template_index);
  std::vector<TokenId> prefix =
      tokenize(v, substitute_target(tmpl.response_prefix, phrase));
  ids.insert(ids.end(), prefix.begin(), prefix.end());
  std::vector<TokenId> frag = encode_box(v, box);
  ids.insert(ids.end(), frag.begin(), frag.end());
  ids.push_back(v.id("."));
  ids.push_back(Vocab::kEos);
  return ids;
}

}  // namespace boxlm
