#pragma once

#include "selfreflect/ablations.hpp"
#include "selfreflect/backends.hpp"
#include "selfreflect/baselines.hpp"
#include "selfreflect/closed_form.hpp"
#include "selfreflect/core.hpp"
#include "selfreflect/dataset.hpp"
#include "selfreflect/emd.hpp"
#include "selfreflect/errors.hpp"
#include "selfreflect/gateway.hpp"
#include "selfreflect/harness.hpp"
#include "selfreflect/http_backend.hpp"
#include "selfreflect/judging.hpp"
#include "selfreflect/masking.hpp"
#include "selfreflect/metric.hpp"
#include "selfreflect/oracle_judge.hpp"
#include "selfreflect/stats.hpp"
#include "selfreflect/stopwords.hpp"
#include "selfreflect/summarizers.hpp"
#include "selfreflect/templates.hpp"
#include "selfreflect/wasserstein.hpp"
