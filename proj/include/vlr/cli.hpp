#pragma once

namespace vlr {

/// Entry point for the `vlr` command. Subcommands: gen-data, render-preview,
/// precompute, train, infer, eval, ablate, sweep-compression.
/// Exit codes: 0 ok, 2 usage, 3 config, 4 data/cache, 5 numerical.
int dispatch(int argc, char** argv);

}  // namespace vlr
