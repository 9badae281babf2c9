#pragma once

#include <string>
#include <string_view>
#include <vector>

/**
 * Prompt construction for the three LLM-backed providers. Prompt text is
 * versioned (kPromptVersion participates in cache keys) so edits here never
 * silently reuse stale cached replies. docs/prompts.md mirrors these strings
 * for review without reading code.
 */
namespace trajscore::prompts {

inline constexpr std::string_view kPromptVersion = "p1";

// ============================================================================
// Judge prompt
// ============================================================================

/**
 * Asks for an integer 0-10 judging one reasoning step in context; the reply
 * must end with "Score: <n>" which rate_step maps to [0,1] by /10. The three
 * judged aspects are step correctness, internal coherence, and progression
 * toward the final response.
 */
inline std::string judge_prompt(std::string_view problem, const std::vector<std::string>& prior_steps,
                                std::string_view response, std::string_view step) {
  std::string p;
  p += "You are grading one step of a reasoning trajectory for a math problem.\n";
  p += "Judge the step on logical soundness, correctness, and how well it progresses ";
  p += "toward the final response.\n\n";
  p += "Problem: ";
  p += problem;
  p += "\n\nEarlier steps:\n";
  if (prior_steps.empty()) {
    p += "(none)\n";
  } else {
    for (size_t i = 0; i < prior_steps.size(); ++i) {
      p += std::to_string(i + 1);
      p += ". ";
      p += prior_steps[i];
      p += "\n";
    }
  }
  p += "\nFinal response:\n";
  p += response;
  p += "\n\nStep to grade:\n";
  p += step;
  p += "\n\nReply with `Score: <0-10>`.";
  return p;
}

// ============================================================================
// Template-extraction prompt
// ============================================================================

/**
 * Asks the verifier to compress a long chain-of-thought output into a
 * numbered list of high-level reasoning steps usable as a guided template.
 */
inline std::string template_extraction_prompt(std::string_view problem, std::string_view full_output) {
  std::string p;
  p += "You are given a long chain-of-thought (CoT) response to a challenging math problem. ";
  p += "Your task is to summarize the response into a structured sequence of reasoning steps ";
  p += "that can serve as a clear and guided template for use by a smaller model.\n\n";
  p += "Problem: ";
  p += problem;
  p += "\n\nResponse: ";
  p += full_output;
  p += "\n\nInstructions:\n";
  p += "Please summarize the response as a concise list of reasoning steps, each capturing a ";
  p += "distinct part of the thought process. These may include restating the problem, defining ";
  p += "variables, constructing mathematical models, performing calculations, verifying results, ";
  p += "handling different cases, correcting mistakes, and drawing the final conclusion. Focus on ";
  p += "preserving the logical flow while keeping each step clear and concise.\n\n";
  p += "Here are a few template examples you should strictly follow:\n\n";
  p += "[Template Example 1]\n\n";
  p += "[Template Example 2]\n\n";
  p += "[Template Example 3]\n\n";
  p += "Write your answer below.";
  return p;
}

// ============================================================================
// Template-guided generation prompt
// ============================================================================

/**
 * Instructs the generator to solve the problem while strictly following the
 * extracted reasoning template, finishing with a \boxed{...} final answer.
 */
inline std::string guided_generation_prompt(std::string_view problem,
                                            const std::vector<std::string>& template_steps) {
  std::string p;
  p += "Solve the following math problem, strictly adhering to the prescribed reasoning ";
  p += "template. Follow the template steps in order; expand each into the concrete work for ";
  p += "this problem. End with the final answer in \\boxed{...}.\n\n";
  p += "Problem: ";
  p += problem;
  p += "\n\nReasoning template:\n";
  for (size_t i = 0; i < template_steps.size(); ++i) {
    p += std::to_string(i + 1);
    p += ". ";
    p += template_steps[i];
    p += "\n";
  }
  p += "\nWrite your solution below.";
  return p;
}

}  // namespace trajscore::prompts
