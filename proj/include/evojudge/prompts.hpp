#pragma once

// Prompt templates, embedded from assets/prompts at build time.
//
// A template has a `[system]` and a `[user]` block. `{{name}}` placeholders are
// substituted by render_prompt; an unresolved placeholder is an error.

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace evojudge {

struct PromptText {
    std::string system;
    std::string user;
};

PromptText render_prompt(std::string_view name, const std::map<std::string, std::string>& vars = {});

std::vector<std::string> prompt_names();

// Digest over every template; recorded with each run.
std::string prompt_set_version();

} // namespace evojudge
