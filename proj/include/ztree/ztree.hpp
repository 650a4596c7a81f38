#pragma once

#include "ztree/error.hpp"
#include "ztree/schema.hpp"
#include "ztree/impurity.hpp"
#include "ztree/chat.hpp"
#include "ztree/prompt_forge.hpp"
#include "ztree/split.hpp"
#include "ztree/response_parse.hpp"
#include "ztree/llm_gateway.hpp"
#include "ztree/advisor.hpp"
#include "ztree/tree_model.hpp"
#include "ztree/tree_builder.hpp"
#include "ztree/oracle_sim.hpp"
#include "ztree/eval_harness.hpp"
