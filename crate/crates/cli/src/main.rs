fn main() -> std::process::ExitCode {
    dphd_cli::main_entry()
}
