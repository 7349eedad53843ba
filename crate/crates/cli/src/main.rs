fn main() {
    std::process::exit(scatsynth_cli::cli_main());
}
