//! Home of the `acceptance` test target; it has no library code.
