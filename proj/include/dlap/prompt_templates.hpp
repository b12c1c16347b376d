#pragma once

// Every piece of fixed prompt wording lives here so it can be reviewed and
// corrected in one place.

#include <array>
#include <string_view>

namespace dlap::promptgen::templates {

// ---- baseline prompts (verbatim; [CODE] and [DF description] are slots) ----
inline constexpr std::string_view kCodeSlot = "[CODE]";
inline constexpr std::string_view kDataFlowSlot = "[DF description]";

inline constexpr std::string_view kRoleBased =
    "I want you to act as a Vulnerability Detection System. My first request is "
    "“Is the following program buggy?” Please answer Yes or No. [CODE]";

inline constexpr std::string_view kAuxiliary =
    "I want you to act as a vulnerability detection system. I will provide you with the "
    "original program and the data flow information, and you will act upon them. Is the "
    "following program buggy? [CODE], [DF description].";

inline constexpr std::string_view kTwoStepIntent = "Please describe the intent of the given code. [CODE].";
inline constexpr std::string_view kTwoStepVerdict =
    "I want you to act as a vulnerability detection system. Is the above program buggy? "
    "Please answer Yes or No";

// System role for every detection request.
inline constexpr std::string_view kDetectionPersona =
    "I want you to act as a Vulnerability Detection System.";

// ---- DLAP prompt sections ----
inline constexpr std::string_view kIclMarker = "### Reference cases";
inline constexpr std::string_view kCotMarker = "### Detection steps";
inline constexpr std::string_view kTargetMarker = "### Target function";
inline constexpr std::string_view kInstructionMarker = "### Answer";

inline constexpr std::string_view kIclHeader =
    "The functions below are the most similar ones found in this project's labeled "
    "history. Each question is answered with the vulnerability probability that a trained "
    "detection model assigned to it.";
inline constexpr std::string_view kIclEmpty =
    "No similar reference functions were found in this project's labeled history.";
inline constexpr std::string_view kIclQuestion = "Q: Is the following program buggy?";
inline constexpr std::string_view kIclAnswerPrefix = "A: Detection probability: ";

inline constexpr std::string_view kCotHeader =
    "Work through the following steps before deciding.";

inline constexpr std::array<std::string_view, 5> kStepHeadings = {
    "Step 1 (Semantics):", "Step 2 (Logic):", "Step 3 (Internal risks):",
    "Step 4 (External risks):", "Step 5 (Chain of thought):"};

inline constexpr std::string_view kInstruction =
    "Is the target function buggy? Please answer Yes or No.\n"
    "Reply in exactly this form:\n"
    "<Yes or No>. <Explanation naming the vulnerable statement and its weakness type, or "
    "why the function is safe>";

// ---- live COT completion request ----
inline constexpr std::string_view kCotCompletionRequest =
    "Below is a five-step vulnerability detection guide for one C/C++ function. Rewrite each "
    "step as concrete questions and observations about this specific function. Keep the five "
    "step headings exactly as written, in the same order, one per line, and do not decide "
    "whether the function is vulnerable.";

}  // namespace dlap::promptgen::templates
