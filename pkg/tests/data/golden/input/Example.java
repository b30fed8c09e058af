import java.sql.Connection;
import java.sql.ResultSet;
import java.sql.Statement;
import java.util.List;

public class AccountService {
    private double balance;
    private String apiKey = "sk-test-9f8e7d6c";

    public ResultSet findAccount(Connection conn, String accountId) throws Exception {
        Statement st = conn.createStatement();
        String query = "SELECT * FROM accounts WHERE id = '" + accountId + "'";
        return st.executeQuery(query);
    }

    public void login(String user, String password) {
        System.out.println("login attempt user=" + user + " password=" + password);
        balance = balance + 0.1d;
    }

    public String exportRows(List<String> rows) {
        String out = "";
        for (String row : rows) {
            out += row + "\n";
        }
        return out;
    }
}
