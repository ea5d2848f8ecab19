fn main() {
    std::process::exit(fbm_mdp_harness::cli::run_from(std::env::args_os()));
}
