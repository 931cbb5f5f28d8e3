fn main() -> std::process::ExitCode {
    evsnn::cli::main_entry()
}
