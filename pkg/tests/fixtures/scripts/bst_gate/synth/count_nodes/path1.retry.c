#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_count_nodes_path1_three_nodes(void)
{
    int values[] = {2, 1, 3};
    struct node *root = bst_from_array(values, 3);
    TEST_ASSERT_EQUAL_INT(get_size(root), count_nodes(root));
    free_tree(root);
}
