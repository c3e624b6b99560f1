import java.util.ArrayList;
import java.util.List;

class Names {
    private final List<String> names = new ArrayList<>();

    void add(String n) {
        names.add(n);
    }
}
