// SPDX-License-Identifier: Apache-2.0
#include "sde/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sde {

namespace {

std::vector<std::string> whitespace_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    out.push_back(tok);
  }
  return out;
}

double f1_against(const std::string& prediction, const std::string& gold) {
  if (prediction.empty() && gold.empty()) {
    return 1.0;
  }
  if (prediction.empty() || gold.empty()) {
    return 0.0;
  }
  const std::vector<std::string> p = whitespace_tokens(prediction);
  const std::vector<std::string> g = whitespace_tokens(gold);
  std::map<std::string, int> gold_counts;
  for (const std::string& t : g) {
    ++gold_counts[t];
  }
  int overlap = 0;
  for (const std::string& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) {
    return 0.0;
  }
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::optional<std::string> last_boxed(std::string_view text) {
  const std::string_view marker = "\\boxed{";
  std::optional<std::string> found;
  std::size_t at = 0;
  while ((at = text.find(marker, at)) != std::string_view::npos) {
    const std::size_t open = at + marker.size();
    int depth = 1;
    std::size_t i = open;
    for (; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') {
        ++depth;
      } else if (text[i] == '}') {
        --depth;
      }
    }
    if (depth == 0) {
      found = std::string(text.substr(open, i - open - 1));
    }
    at = open;
  }
  return found;
}

std::optional<std::string> last_choice(std::string_view text) {
  std::optional<std::string> found;
  for (std::size_t i = 0; i + 2 < text.size(); ++i) {
    if (text[i] == '(' && text[i + 1] >= 'A' && text[i + 1] <= 'Z' && text[i + 2] == ')') {
      found = std::string(1, text[i + 1]);
    }
  }
  return found;
}

std::optional<std::string> last_finish(std::string_view text) {
  const std::string_view marker = "Finish[";
  std::optional<std::string> found;
  std::size_t at = 0;
  while ((at = text.find(marker, at)) != std::string_view::npos) {
    const std::size_t open = at + marker.size();
    const std::size_t close = text.find(']', open);
    if (close == std::string_view::npos) {
      break;
    }
    found = std::string(text.substr(open, close - open));
    at = close;
  }
  return found;
}

}  // namespace

std::optional<ExtractedAnswer> extract_answer(std::string_view text, AnswerFormat format) {
  std::optional<std::string> raw;
  switch (format) {
    case AnswerFormat::boxed:
      raw = last_boxed(text);
      break;
    case AnswerFormat::choice:
      raw = last_choice(text);
      break;
    case AnswerFormat::finish:
      raw = last_finish(text);
      break;
  }
  if (!raw) {
    return std::nullopt;
  }
  return ExtractedAnswer{*raw, normalize_answer(*raw)};
}

std::string normalize_answer(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || std::isspace(u)) {
      lowered += static_cast<char>(std::tolower(u));
    }
    // Punctuation is dropped entirely (no space inserted).
  }
  std::string out;
  for (const std::string& tok : whitespace_tokens(lowered)) {
    if (tok == "a" || tok == "an" || tok == "the") {
      continue;
    }
    if (!out.empty()) {
      out += ' ';
    }
    out += tok;
  }
  return out;
}

double exact_match(const std::string& prediction, const std::vector<std::string>& golds) {
  for (const std::string& g : golds) {
    if (prediction == g) {
      return 1.0;
    }
  }
  return 0.0;
}

double token_f1(const std::string& prediction, const std::vector<std::string>& golds) {
  double best = 0.0;
  for (const std::string& g : golds) {
    best = std::max(best, f1_against(prediction, g));
  }
  return best;
}

std::string setting_name(Setting s) {
  switch (s) {
    case Setting::ia:
      return "ia";
    case Setting::debate:
      return "debate";
    case Setting::workflow:
      return "workflow";
    case Setting::ia_single:
      return "ia_single";
    case Setting::debate_single:
      return "debate_single";
    case Setting::workflow_single:
      return "workflow_single";
  }
  throw std::invalid_argument("setting_name: unknown setting");
}

AnswerFormat format_for(Setting setting, QuestionKind kind) {
  if (setting == Setting::workflow) {
    return AnswerFormat::finish;  // answers arrive through Finish[...]
  }
  if (kind == QuestionKind::choice) {
    return AnswerFormat::choice;
  }
  return AnswerFormat::boxed;
}

QuestionScore score_question(const QuestionRecord& question, Setting setting,
                             const std::vector<std::string>& final_responses) {
  std::vector<std::string> golds;
  golds.reserve(question.answers.size());
  for (const std::string& a : question.answers) {
    golds.push_back(normalize_answer(a));
  }
  const AnswerFormat format = format_for(setting, question.kind);

  QuestionScore score;
  score.question_id = question.id;
  for (const std::string& response : final_responses) {
    const std::optional<ExtractedAnswer> answer = extract_answer(response, format);
    if (!answer) {
      score.response_em.push_back(0.0);
      score.response_f1.push_back(0.0);
      score.response_formatted.push_back(false);
      continue;
    }
    double em = 0.0;
    double f1 = 0.0;
    if (question.kind == QuestionKind::freeform) {
      em = exact_match(answer->normalized, golds);
      f1 = token_f1(answer->normalized, golds);
    } else {
      // Accuracy for closed answer shapes; both columns carry it.
      em = exact_match(answer->normalized, golds);
      f1 = em;
    }
    score.response_em.push_back(em);
    score.response_f1.push_back(f1);
    score.response_formatted.push_back(true);
  }

  if (!score.response_em.empty()) {
    double em_sum = 0.0;
    double f1_sum = 0.0;
    for (std::size_t i = 0; i < score.response_em.size(); ++i) {
      em_sum += score.response_em[i];
      f1_sum += score.response_f1[i];
    }
    score.em = em_sum / static_cast<double>(score.response_em.size());
    score.f1 = f1_sum / static_cast<double>(score.response_f1.size());
  }
  return score;
}

Summary aggregate(const std::vector<std::vector<QuestionScore>>& runs, Setting setting) {
  if (runs.empty() || runs.front().empty()) {
    throw std::invalid_argument("aggregate: no scores");
  }
  std::vector<std::string> reference_ids;
  for (const QuestionScore& q : runs.front()) {
    reference_ids.push_back(q.question_id);
  }
  std::vector<std::string> sorted_ref = reference_ids;
  std::sort(sorted_ref.begin(), sorted_ref.end());
  for (std::size_t i = 1; i < sorted_ref.size(); ++i) {
    if (sorted_ref[i] == sorted_ref[i - 1]) {
      throw std::invalid_argument("aggregate: duplicate question id '" + sorted_ref[i] + "'");
    }
  }
  for (const auto& run : runs) {
    std::vector<std::string> ids;
    for (const QuestionScore& q : run) {
      ids.push_back(q.question_id);
    }
    std::sort(ids.begin(), ids.end());
    if (ids != sorted_ref) {
      throw std::invalid_argument("aggregate: runs cover different question sets");
    }
  }

  Summary summary;
  summary.n_runs = static_cast<int>(runs.size());
  summary.n_questions = static_cast<int>(runs.front().size());

  long long formatted = 0;
  long long responses = 0;
  double em_over_runs = 0.0;
  double f1_over_runs = 0.0;
  for (const auto& run : runs) {
    double run_em = 0.0;
    double run_f1 = 0.0;
    if (setting == Setting::ia_single) {
      // Each response slot is one standalone agent; credit the best agent's
      // totals rather than the per-question mean.
      const std::size_t agents = run.front().response_em.size();
      for (const QuestionScore& q : run) {
        if (q.response_em.size() != agents) {
          throw std::invalid_argument(
              "aggregate: standalone-agent runs must score the same agent count per question");
        }
      }
      double best_em = 0.0;
      double best_f1 = 0.0;
      double best_key = -1.0;
      for (std::size_t a = 0; a < agents; ++a) {
        double em_sum = 0.0;
        double f1_sum = 0.0;
        for (const QuestionScore& q : run) {
          em_sum += q.response_em[a];
          f1_sum += q.response_f1[a];
        }
        // Best agent by exact-match total, F1 breaking ties.
        const double key = em_sum + 1e-9 * f1_sum;
        if (key > best_key) {
          best_key = key;
          best_em = em_sum;
          best_f1 = f1_sum;
        }
      }
      run_em = best_em / static_cast<double>(run.size());
      run_f1 = best_f1 / static_cast<double>(run.size());
    } else {
      for (const QuestionScore& q : run) {
        run_em += q.em;
        run_f1 += q.f1;
      }
      run_em /= static_cast<double>(run.size());
      run_f1 /= static_cast<double>(run.size());
    }
    em_over_runs += run_em;
    f1_over_runs += run_f1;
    for (const QuestionScore& q : run) {
      for (bool f : q.response_formatted) {
        formatted += f ? 1 : 0;
        ++responses;
      }
    }
  }
  summary.em = em_over_runs / static_cast<double>(runs.size());
  summary.f1 = f1_over_runs / static_cast<double>(runs.size());
  summary.formatted_rate =
      responses == 0 ? 0.0
                     : static_cast<double>(formatted) / static_cast<double>(responses);
  return summary;
}

}  // namespace sde
