#include "qmtot/distill.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "qmtot/evaluator.hpp"
#include "qmtot/promptkit.hpp"
#include "qmtot/random.hpp"

namespace qmtot {

std::string render_question_prompt(const Question& q) {
  return q.stem + "\n\n" + format_options(q);
}

LongCoT reflect(const Question& q, const ChainRecord& chain, int source_index,
                CallSession& session) {
  if (!chain.correct || !chain.answer) {
    throw Error("reflect needs a graded chain (question " + q.id + ")");
  }
  Bindings b = question_bindings(q);
  b["chain"] = format_chain(chain);
  b["answer"] = chain.answer->str();
  const ChatResponse resp = session.call(Role::reflector, Purpose::reflect, TemplateName::reflect,
                                         b, session.config().generation_temperature);

  const bool blank = std::all_of(resp.text.begin(), resp.text.end(),
                                 [](unsigned char ch) { return std::isspace(ch); });
  if (blank) throw AnswerDriftError("reflector returned blank text for " + q.id);
  const auto reflected = extract_answer(resp.text, q.labels());
  if (reflected != chain.answer) {
    throw AnswerDriftError("reflection of a " + chain.answer->str() + " chain for " + q.id +
                           " ends on " + (reflected ? reflected->str() : std::string("no answer")));
  }
  return LongCoT{q.id, source_index, render_question_prompt(q), resp.text, *chain.correct};
}

std::vector<PreferencePair> match_pairs(const std::vector<LongCoT>& longs, std::uint64_t seed) {
  struct Bucket {
    std::string prompt;
    std::vector<const LongCoT*> correct;
    std::vector<const LongCoT*> incorrect;
  };
  std::vector<std::string> order;
  std::map<std::string, Bucket> buckets;
  for (const auto& l : longs) {
    auto [it, inserted] = buckets.try_emplace(l.question_id);
    if (inserted) {
      order.push_back(l.question_id);
      it->second.prompt = l.prompt;
    }
    (l.correct ? it->second.correct : it->second.incorrect).push_back(&l);
  }

  std::vector<PreferencePair> pairs;
  for (const auto& qid : order) {
    auto& bucket = buckets.at(qid);
    const std::size_t n = std::min(bucket.correct.size(), bucket.incorrect.size());
    if (n == 0) continue;
    SeededRng rng(mix64(seed ^ stable_hash(qid)));
    rng.shuffle(bucket.correct);
    rng.shuffle(bucket.incorrect);
    for (std::size_t i = 0; i < n; ++i) {
      pairs.push_back(
          PreferencePair{qid, bucket.prompt, bucket.correct[i]->text, bucket.incorrect[i]->text});
    }
  }
  return pairs;
}

std::vector<std::string> check_pairs(const std::vector<PreferencePair>& pairs) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const std::string tag = "pair " + std::to_string(i);
    if (p.question_id.empty()) v.push_back(tag + ": empty question_id");
    if (p.chosen.empty() || p.rejected.empty()) v.push_back(tag + ": empty text");
    if (p.chosen == p.rejected) v.push_back(tag + ": chosen equals rejected");
  }
  return v;
}

Json to_json(const PreferencePair& p) {
  return Json{{"prompt", p.prompt},
              {"chosen", p.chosen},
              {"rejected", p.rejected},
              {"question_id", p.question_id}};
}

PreferencePair preference_pair_from_json(const Json& j) {
  PreferencePair p;
  try {
    p.prompt = j.at("prompt").get<std::string>();
    p.chosen = j.at("chosen").get<std::string>();
    p.rejected = j.at("rejected").get<std::string>();
    p.question_id = j.value("question_id", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("preference pair: ") + e.what());
  }
  return p;
}

std::size_t export_dpo(const std::vector<PreferencePair>& pairs,
                       const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  std::size_t written = 0;
  for (const auto& p : pairs) {
    out << to_json(p).dump() << '\n';
    ++written;
  }
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
  return written;
}

std::vector<PreferencePair> load_dpo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<PreferencePair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      pairs.push_back(preference_pair_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace qmtot
