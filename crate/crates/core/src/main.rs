fn main() -> std::process::ExitCode {
    gpl::cli::run()
}
