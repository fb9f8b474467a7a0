"""cdqkl-sim – statevector simulation of consensus-based distributed quantum kernel learning."""
